#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cxrbench/config.hpp"
#include "cxrbench/error.hpp"
#include "cxrbench/trainer.hpp"

namespace cxrbench {

struct ExperimentOutcome {
  ExitCode exit_code = ExitCode::kOk;
  SuiteResult suite;
  std::vector<std::filesystem::path> reports;
  std::string error_summary;  // single-line JSON when exit_code != kOk
};

// Loads the manifest, snapshots the config, computes class weights, builds
// and persists the split plans, trains (resuming completed instances) and
// emits every report. Holds the run LOCK for the duration.
ExperimentOutcome run_experiment(const RunConfig& config,
                                 const std::function<void(const std::string&)>& log = {});

// Stage helpers shared with the CLI subcommands.
RunStore open_run(const RunConfig& config);
std::vector<SplitPlan> prepare_splits(const RunConfig& config, const Manifest& manifest,
                                      const RunStore& store);
TrainConfig effective_train_config(const RunConfig& config, const Manifest& manifest);

std::string error_json(const Error& error);

}  // namespace cxrbench
