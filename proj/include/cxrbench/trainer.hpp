#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "cxrbench/dataset.hpp"
#include "cxrbench/model_zoo.hpp"
#include "cxrbench/network.hpp"
#include "cxrbench/store.hpp"

namespace cxrbench {

struct TrainConfig {
  int max_epochs = 50;
  int patience = 10;
  double lr_backbone = 1e-5;
  double lr_head = 1e-3;
  int batch_size = 32;
  ClassWeights class_weights;
  HeadSpec head;
  int stub_input_size = 32;
  std::string run_id = "run";
};

// Checks learning rates, batch size and epoch bounds. patience >= max_epochs
// is allowed (early stopping then never fires) and only produces a warning.
std::vector<std::string> validate(const TrainConfig& config);

struct EarlyStopState {
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_since_improve = 0;
  int last_epoch = 0;
};

enum class StopDecision { kContinue, kStop };

struct EarlyStopResult {
  EarlyStopState state;
  StopDecision decision = StopDecision::kContinue;
};

// Strict improvement resets the counter; stop once the counter reaches
// patience. Epochs must arrive as 1, 2, 3, ... (ProtocolError otherwise).
EarlyStopResult early_stop_step(const EarlyStopState& state, int epoch, double val_loss,
                                int patience);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainedInstance {
  std::string model_name;
  int split_index = 1;
  std::string weights_ref;  // path relative to the run root
  std::string weights_sha256;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::vector<EpochRecord> history;
};

std::string format_history_csv(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> parse_history_csv(std::string_view text);
std::string format_instance_meta(const TrainedInstance& instance);
TrainedInstance parse_instance_meta(std::string_view text);

// Preprocessed model inputs keyed by (image id, input size). Thread-safe.
class InputCache {
 public:
  explicit InputCache(const Manifest& manifest);
  // Missing or undecodable image files raise DataError naming the id.
  const Planar& get(const std::string& image_id, const BackboneSpec& spec);
  const ManifestEntry& entry(const std::string& image_id) const;

 private:
  std::map<std::string, const ManifestEntry*> by_id_;
  std::map<std::pair<std::string, int>, std::unique_ptr<Planar>> tensors_;
  std::mutex mutex_;
};

struct LabeledInputs {
  std::vector<const Planar*> inputs;
  std::vector<int> labels;
};

struct FitResult {
  Classifier model;  // restored to the best epoch
  std::vector<std::uint8_t> best_snapshot;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<EpochRecord> history;
};

// The optimization loop: seeded per-epoch shuffling, class-weighted loss,
// two-tier Adam, patience-based early stopping with full-precision
// best-weight restoration. Non-finite losses raise TrainingError.
FitResult fit(Classifier model, const LabeledInputs& train, const LabeledInputs& val,
              const TrainConfig& config, std::uint64_t shuffle_seed);

std::uint64_t init_seed_for(std::string_view model_name, const SplitPlan& plan);
std::uint64_t shuffle_seed_for(std::string_view model_name, const SplitPlan& plan);

// One repetition: trains on plan.train_ids, early-stops on plan.val_ids and
// persists weights, history, logits (train/validation/test) and metadata.
TrainedInstance train_instance(const std::string& model_name, const SplitPlan& plan,
                               const TrainConfig& config, const Manifest& manifest,
                               const RunStore& store, InputCache* cache = nullptr);

struct SuiteFailure {
  std::string model_name;
  int split_index = 0;
  std::string kind;
  std::string message;
};

struct SuiteResult {
  std::vector<TrainedInstance> instances;  // completed, including resumed ones
  std::vector<SuiteFailure> failures;
  int trained = 0;  // newly trained in this call
  int skipped = 0;  // already complete in the store
};

struct SuiteOptions {
  int workers = 1;
  std::function<void(const std::string&)> log;
};

// |models| x 5 instances; instance i of every model uses plans[i]. Completed
// (model, split) pairs are skipped; failures are recorded and the suite
// continues.
SuiteResult train_suite(const std::vector<std::string>& model_names,
                        const std::vector<SplitPlan>& plans, const TrainConfig& config,
                        const Manifest& manifest, const RunStore& store,
                        const SuiteOptions& options = {});

TrainedInstance load_instance(const RunStore& store, std::string_view model, int split_index);

}  // namespace cxrbench
