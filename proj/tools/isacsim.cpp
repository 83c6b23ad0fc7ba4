#include "isac/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return isac::cli::main(argc, argv, std::cout, std::cerr); }
