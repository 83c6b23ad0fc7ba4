#pragma once

#include "isac/types.hpp"

#include <string>
#include <vector>

namespace isac::plot {

/// Unknown figure key; the message enumerates the valid ones.
struct UnknownKey : InvalidInput {
  using InvalidInput::InvalidInput;
};

const std::vector<std::string>& keys();

/// Writes <results>/plotdata/<key>.csv and returns its path.
/// Convergence and KL keys read a run directory (metrics.csv, voi.csv); trajectory keys read its
/// timeseries.csv; *_vs_* keys scan every run directory below `results` (config.json + eval.csv)
/// and average the evaluation metric per swept value.
std::string write_plotdata(const std::string& results, const std::string& key);

}  // namespace isac::plot
