#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aesmc/cli/config.hpp"
#include "aesmc/train.hpp"

namespace aesmc::cli {

/// Names of the runnable experiments, in help order.
const std::vector<std::string>& experiment_names();

/// Key schema of an experiment. Throws ConfigError for an unknown name.
const Schema& experiment_schema(const std::string& experiment);

struct ExperimentOutcome {
  bool passed = true;
  std::vector<std::string> failures;  ///< one line per failed threshold

  void check(bool ok, const std::string& what);
};

/// Runs a validated configuration: writes manifest.json (incomplete), the data
/// files, then the finalized manifest. Data files depend only on the config.
ExperimentOutcome run_experiment(const ExperimentConfig& config);

/// Trend checks on an inference grid: quality improves with K_test, worsens
/// with K_train, and (train IS, test SMC) beats (train SMC, test IS) at matched
/// K. `sigma` scales the combined standard error tolerated before a
/// non-monotone step counts as a violation.
std::vector<std::string> grid_trend_failures(const std::vector<GridCell>& cells,
                                             double sigma = 3.0);

}  // namespace aesmc::cli
