#pragma once

#include "isac/types.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <string>

namespace isac {

/// Locale-independent shortest-ish decimal; infinities as "inf"/"-inf", NaN as "nan".
inline std::string fmt(Real v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string fmt(long long v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(std::size_t v) { return std::to_string(v); }

class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::initializer_list<const char*> header) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write " + path);
    bool first = true;
    for (const char* h : header) {
      if (!first) out_ << ',';
      out_ << h;
      first = false;
    }
    out_ << '\n';
  }

  template <typename... Ts>
  void row(const Ts&... values) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(values), first = false), ...);
    out_ << '\n';
  }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <typename T>
  static std::string cell(const T& v) { return fmt(v); }

  std::ofstream out_;
};

}  // namespace isac
