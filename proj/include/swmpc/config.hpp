#pragma once

#include "swmpc/simulation.hpp"

#include <string>
#include <vector>

namespace swmpc {

// Experiment files are JSON. Subsystem and mode indices in files are
// 1-based; everything in memory is 0-based. Constraint sets are given
// either as boxes (x_min/x_max, u_min/u_max) or in inequality form
// {"A": [[...]], "b": [...]}.

struct LoadResult {
  ExperimentSpec spec;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

LoadResult parse_experiment(const std::string& json_text);
LoadResult load_experiment(const std::string& path);

// Canonical dump; parse_experiment(dump_experiment(s)) reproduces s exactly.
std::string dump_experiment(const ExperimentSpec& spec);

} // namespace swmpc
