#pragma once

#include <map>
#include <string>

#include "g5/config.hpp"

namespace g5 {

struct RunResult {
  std::map<std::string, double> accuracy;  // graph id -> test accuracy
  double reasoned_accuracy = -1.0;         // reason mode; -1 when unknown
  double random_baseline = -1.0;           // reason mode; 1 / target classes
  std::string checkpoint_path;
  std::string metrics_path;
  std::string labels_path;
};

// Stable tag identifying a run in metrics rows and file names.
std::string run_identifier(const RunConfig& cfg);

// Executes the configured run end to end: load, preprocess (cached), train
// per mode, evaluate, and write metrics/checkpoints under the output
// directory.
RunResult execute_run(const RunConfig& cfg);

}  // namespace g5
