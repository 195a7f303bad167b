#include "cxrbench/experiment.hpp"

#include <json.hpp>

#include "cxrbench/reports.hpp"
#include "cxrbench/store.hpp"

namespace cxrbench {

namespace fs = std::filesystem;

std::string error_json(const Error& error) {
  nlohmann::json j{{"error", error.kind()},
                   {"exit_code", static_cast<int>(error.exit_code())},
                   {"message", error.what()}};
  return j.dump();
}

RunStore open_run(const RunConfig& config) {
  validate(config);
  RunStore store(config.run_root());
  const std::string snapshot = format_config_snapshot(config);
  if (fs::exists(store.config_path())) {
    if (read_file(store.config_path()) != snapshot) {
      throw ValidationError("run_id '" + config.run_id + "' already exists under " +
                            config.output_root.string() +
                            " with a different configuration; choose a new run_id");
    }
  } else {
    store.commit(store.config_path(), snapshot);
  }
  return store;
}

std::vector<SplitPlan> prepare_splits(const RunConfig& config, const Manifest& manifest,
                                      const RunStore& store) {
  std::vector<SplitPlan> plans = build_splits(manifest, config.val_fraction, config.seeds);
  for (const auto& plan : plans) {
    const fs::path path = store.split_path(plan.split_index);
    const std::string text = format_split_tsv(plan);
    if (fs::exists(path) && read_file(path) != text) {
      throw ValidationError(path.string() +
                            " differs from the plan rebuilt from the manifest; the manifest "
                            "changed since this run started");
    }
    store.commit(path, text);
  }
  return plans;
}

TrainConfig effective_train_config(const RunConfig& config, const Manifest& manifest) {
  TrainConfig train = config.train;
  train.class_weights = compute_class_weights(count_classes(manifest, Subset::kTrain));
  train.run_id = config.run_id;
  return train;
}

ExperimentOutcome run_experiment(const RunConfig& config,
                                 const std::function<void(const std::string&)>& log) {
  ExperimentOutcome outcome;
  auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };
  try {
    RunStore store = open_run(config);
    RunLock lock(store.root());
    const Manifest manifest = load_manifest(config.manifest_path, config.manifest_format);
    if (count_classes(manifest, Subset::kTest).t == 0) {
      throw DataError("manifest has no test entries");
    }
    const std::vector<SplitPlan> plans = prepare_splits(config, manifest, store);
    for (const auto& plan : plans) {
      for (const auto& w : plan.warnings) {
        say("split " + std::to_string(plan.split_index) + ": " + w);
      }
    }
    const TrainConfig train = effective_train_config(config, manifest);
    for (const auto& w : validate(train)) say("warning: " + w);
    say("class weights: negative " + std::to_string(train.class_weights.w_negative) +
        ", positive " + std::to_string(train.class_weights.w_positive));

    outcome.suite = train_suite(config.model_names, plans, train, manifest, store,
                                {config.workers, log});
    say("suite: " + std::to_string(outcome.suite.trained) + " trained, " +
        std::to_string(outcome.suite.skipped) + " resumed, " +
        std::to_string(outcome.suite.failures.size()) + " failed");
    if (!outcome.suite.failures.empty()) {
      nlohmann::json failures = nlohmann::json::array();
      for (const auto& f : outcome.suite.failures) {
        failures.push_back({{"model", f.model_name},
                            {"split_index", f.split_index},
                            {"kind", f.kind},
                            {"message", f.message}});
      }
      outcome.exit_code = ExitCode::kTraining;
      outcome.error_summary = nlohmann::json{{"error", "training"},
                                             {"exit_code", static_cast<int>(ExitCode::kTraining)},
                                             {"message", "some instances failed"},
                                             {"failures", failures}}
                                  .dump();
      return outcome;
    }
    outcome.reports = emit_reports(store, config);
  } catch (const Error& e) {
    outcome.exit_code = e.exit_code();
    outcome.error_summary = error_json(e);
  }
  return outcome;
}

}  // namespace cxrbench
