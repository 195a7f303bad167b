#include "cxrbench/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "cxrbench/error.hpp"
#include "cxrbench/logits.hpp"
#include "text_util.hpp"

namespace cxrbench {

namespace fs = std::filesystem;

std::vector<std::string> validate(const TrainConfig& c) {
  if (c.max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (c.patience < 1) throw ValidationError("patience must be >= 1");
  if (!(c.lr_backbone >= 0.0) || !(c.lr_head >= 0.0)) {
    throw ValidationError("learning rates must be >= 0");
  }
  if (c.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(c.class_weights.w_negative > 0.0) || !(c.class_weights.w_positive > 0.0)) {
    throw ValidationError("class weights must be > 0");
  }
  validate(c.head);
  std::vector<std::string> warnings;
  if (c.patience >= c.max_epochs) {
    warnings.push_back("patience >= max_epochs: early stopping can never trigger");
  }
  return warnings;
}

EarlyStopResult early_stop_step(const EarlyStopState& state, int epoch, double val_loss,
                                int patience) {
  if (epoch != state.last_epoch + 1) {
    throw ProtocolError("early stopping expected epoch " + std::to_string(state.last_epoch + 1) +
                        ", got " + std::to_string(epoch));
  }
  if (patience < 1) throw ProtocolError("patience must be >= 1");
  EarlyStopResult r{state, StopDecision::kContinue};
  r.state.last_epoch = epoch;
  if (val_loss < state.best_loss) {
    r.state.best_loss = val_loss;
    r.state.best_epoch = epoch;
    r.state.epochs_since_improve = 0;
  } else {
    ++r.state.epochs_since_improve;
  }
  if (r.state.epochs_since_improve >= patience) r.decision = StopDecision::kStop;
  return r;
}

std::string format_history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,wall_seconds\n";
  char wall[32];
  for (const auto& h : history) {
    std::snprintf(wall, sizeof wall, "%.3f", h.wall_seconds);
    out += std::to_string(h.epoch) + ',' + detail::format_double(h.train_loss) + ',' +
           detail::format_double(h.val_loss) + ',' + wall + '\n';
  }
  return out;
}

std::vector<EpochRecord> parse_history_csv(std::string_view text) {
  std::vector<EpochRecord> out;
  const auto lines = detail::split(text, '\n');
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = detail::split(lines[i], ',');
    if (f.size() != 4) throw ParseError("history.csv", i + 1, "expected 4 fields");
    out.push_back({detail::parse_int<int>(f[0], "epoch"), detail::parse_double(f[1], "train_loss"),
                   detail::parse_double(f[2], "val_loss"),
                   detail::parse_double(f[3], "wall_seconds")});
  }
  return out;
}

std::string format_instance_meta(const TrainedInstance& t) {
  return "model = " + t.model_name + "\nsplit_index = " + std::to_string(t.split_index) +
         "\nweights_ref = " + t.weights_ref + "\nweights_sha256 = " + t.weights_sha256 +
         "\nepochs_run = " + std::to_string(t.epochs_run) +
         "\nbest_epoch = " + std::to_string(t.best_epoch) +
         "\nbest_val_loss = " + detail::format_double(t.best_val_loss) +
         "\ninit_seed = " + std::to_string(t.init_seed) +
         "\nshuffle_seed = " + std::to_string(t.shuffle_seed) + "\n";
}

TrainedInstance parse_instance_meta(std::string_view text) {
  TrainedInstance t;
  std::size_t lineno = 0;
  for (const auto& line : detail::split(text, '\n')) {
    ++lineno;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("instance.meta", lineno, "expected key = value");
    const std::string key(detail::trim(std::string_view(line).substr(0, eq)));
    const std::string value(detail::trim(std::string_view(line).substr(eq + 1)));
    if (key == "model") t.model_name = value;
    else if (key == "split_index") t.split_index = detail::parse_int<int>(value, key);
    else if (key == "weights_ref") t.weights_ref = value;
    else if (key == "weights_sha256") t.weights_sha256 = value;
    else if (key == "epochs_run") t.epochs_run = detail::parse_int<int>(value, key);
    else if (key == "best_epoch") t.best_epoch = detail::parse_int<int>(value, key);
    else if (key == "best_val_loss") t.best_val_loss = detail::parse_double(value, key);
    else if (key == "init_seed") t.init_seed = detail::parse_int<std::uint64_t>(value, key);
    else if (key == "shuffle_seed") t.shuffle_seed = detail::parse_int<std::uint64_t>(value, key);
    else throw ParseError("instance.meta", lineno, "unknown key '" + key + "'");
  }
  return t;
}

InputCache::InputCache(const Manifest& manifest) {
  for (const auto& e : manifest) by_id_[e.image_id] = &e;
}

const ManifestEntry& InputCache::entry(const std::string& image_id) const {
  const auto it = by_id_.find(image_id);
  if (it == by_id_.end()) throw DataError("image id '" + image_id + "' is not in the manifest");
  return *it->second;
}

const Planar& InputCache::get(const std::string& image_id, const BackboneSpec& spec) {
  const ManifestEntry& e = entry(image_id);
  const std::pair<std::string, int> key{
      image_id, spec.input_resolution * 8 + static_cast<int>(spec.convention)};
  std::lock_guard lock(mutex_);
  auto it = tensors_.find(key);
  if (it != tensors_.end()) return *it->second;
  if (!fs::exists(e.path)) {
    throw DataError("image file for id '" + image_id + "' not found: " + e.path.string());
  }
  Raster raster;
  try {
    raster = read_png(e.path);
  } catch (const DataError& err) {
    throw DataError("image id '" + image_id + "': " + err.what());
  }
  auto tensor = std::make_unique<Planar>(preprocess(raster, spec));
  return *tensors_.emplace(key, std::move(tensor)).first->second;
}

namespace {

double validation_loss(const Classifier& model, const LabeledInputs& val,
                       const ClassWeights& weights) {
  std::vector<LogitPair> logits;
  logits.reserve(val.inputs.size());
  for (const Planar* x : val.inputs) logits.push_back(model.forward(*x));
  return weighted_cross_entropy(logits, val.labels, weights.w_negative, weights.w_positive).mean;
}

}  // namespace

FitResult fit(Classifier model, const LabeledInputs& train, const LabeledInputs& val,
              const TrainConfig& config, std::uint64_t shuffle_seed) {
  validate(config);
  if (train.inputs.empty()) throw DataError("empty training set");
  if (val.inputs.empty()) throw DataError("empty validation set");

  Rng shuffle_rng(shuffle_seed);
  Rng dropout_rng(mix_seed(shuffle_seed, 0xd409));
  Adam adam({config.lr_backbone, config.lr_head});
  auto params = model.parameters();

  FitResult result{model, model.serialize(), 0, 0, 0.0, {}};
  EarlyStopState stop_state;
  std::vector<std::size_t> order(train.inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      model.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        const int label = train.labels[idx];
        loss_sum += model.accumulate(*train.inputs[idx], label,
                                     config.class_weights.of(static_cast<Label>(label)), scale,
                                     dropout_rng);
      }
      adam.step(params);
    }
    const double train_loss = loss_sum / static_cast<double>(order.size());
    const double val_loss = validation_loss(model, val, config.class_weights);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                          " (train " + detail::format_double(train_loss) + ", validation " +
                          detail::format_double(val_loss) + ")");
    }
    const auto step = early_stop_step(stop_state, epoch, val_loss, config.patience);
    stop_state = step.state;
    if (stop_state.best_epoch == epoch) result.best_snapshot = model.serialize();
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back({epoch, train_loss, val_loss, wall});
    result.epochs_run = epoch;
    if (step.decision == StopDecision::kStop) break;
  }

  model.deserialize(result.best_snapshot);
  result.model = std::move(model);
  result.best_epoch = stop_state.best_epoch;
  result.best_val_loss = stop_state.best_loss;
  return result;
}

std::uint64_t init_seed_for(std::string_view model_name, const SplitPlan& plan) {
  return mix_seed(mix_seed(plan.seed, hash_label(model_name)), 0x1417);
}

std::uint64_t shuffle_seed_for(std::string_view model_name, const SplitPlan& plan) {
  return mix_seed(mix_seed(plan.seed, hash_label(model_name)), 0x5401);
}

namespace {

LabeledInputs gather(const std::vector<std::string>& ids, InputCache& cache,
                     const BackboneSpec& spec) {
  LabeledInputs out;
  out.inputs.reserve(ids.size());
  out.labels.reserve(ids.size());
  for (const auto& id : ids) {
    out.inputs.push_back(&cache.get(id, spec));
    out.labels.push_back(static_cast<int>(cache.entry(id).label));
  }
  return out;
}

void append_logits(std::vector<LogitRecord>& out, const Classifier& model,
                   const std::vector<std::string>& ids, EvalSubset subset, InputCache& cache,
                   const std::string& run_id, const std::string& model_name, int split_index) {
  for (const auto& id : ids) {
    const LogitPair z = model.forward(cache.get(id, model.spec()));
    out.push_back({run_id, model_name, split_index, subset, id, z[0], z[1], cache.entry(id).label});
  }
}

}  // namespace

TrainedInstance train_instance(const std::string& model_name, const SplitPlan& plan,
                               const TrainConfig& config, const Manifest& manifest,
                               const RunStore& store, InputCache* cache) {
  std::optional<InputCache> own_cache;
  if (!cache) cache = &own_cache.emplace(manifest);
  const fs::path dir = store.instance_dir(model_name, plan.split_index);

  try {
    const BackboneSpec spec = resolve_model(model_name, config.stub_input_size);
    TrainedInstance out;
    out.model_name = model_name;
    out.split_index = plan.split_index;
    out.init_seed = init_seed_for(model_name, plan);
    out.shuffle_seed = shuffle_seed_for(model_name, plan);

    Classifier model = build_classifier(spec, config.head, Init::kRandom, out.init_seed);
    const LabeledInputs train = gather(plan.train_ids, *cache, spec);
    const LabeledInputs val = gather(plan.val_ids, *cache, spec);
    FitResult fitted = fit(std::move(model), train, val, config, out.shuffle_seed);

    out.epochs_run = fitted.epochs_run;
    out.best_epoch = fitted.best_epoch;
    out.best_val_loss = fitted.best_val_loss;
    out.history = fitted.history;
    out.weights_sha256 = sha256_hex(fitted.best_snapshot);
    out.weights_ref =
        store.instance_artifact(model_name, plan.split_index, artifact::kWeights)
            .lexically_relative(store.root())
            .generic_string();

    std::vector<std::string> test_ids;
    for (const auto& e : manifest) {
      if (e.subset == Subset::kTest) test_ids.push_back(e.image_id);
    }
    std::vector<LogitRecord> records;
    const std::string run_id = config.run_id;
    append_logits(records, fitted.model, plan.train_ids, EvalSubset::kTrain, *cache, run_id,
                  model_name, plan.split_index);
    append_logits(records, fitted.model, plan.val_ids, EvalSubset::kValidation, *cache, run_id,
                  model_name, plan.split_index);
    append_logits(records, fitted.model, test_ids, EvalSubset::kTest, *cache, run_id, model_name,
                  plan.split_index);

    // Metadata last: its presence marks the instance complete.
    store.commit(dir / artifact::kWeights, std::span<const std::uint8_t>(fitted.best_snapshot));
    store.commit(dir / artifact::kHistory, format_history_csv(out.history));
    store.commit(dir / artifact::kLogits, format_logits_csv(records));
    store.commit(dir / artifact::kMeta, format_instance_meta(out));
    std::error_code ec;
    fs::remove(dir / artifact::kError, ec);
    return out;
  } catch (const Error& e) {
    store.commit(dir / artifact::kError, std::string(e.kind()) + ": " + e.what() + "\n");
    throw;
  }
}

TrainedInstance load_instance(const RunStore& store, std::string_view model, int split_index) {
  TrainedInstance t = parse_instance_meta(
      read_file(store.instance_artifact(model, split_index, artifact::kMeta)));
  t.history =
      parse_history_csv(read_file(store.instance_artifact(model, split_index, artifact::kHistory)));
  return t;
}

SuiteResult train_suite(const std::vector<std::string>& model_names,
                        const std::vector<SplitPlan>& plans, const TrainConfig& config,
                        const Manifest& manifest, const RunStore& store,
                        const SuiteOptions& options) {
  if (plans.size() != static_cast<std::size_t>(kNumSplits)) {
    throw ValidationError("train_suite needs exactly 5 split plans, got " +
                          std::to_string(plans.size()));
  }
  validate(config);
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  struct Job {
    const std::string* model;
    const SplitPlan* plan;
  };
  SuiteResult result;
  std::vector<Job> jobs;
  for (const auto& model : model_names) {
    for (const auto& plan : plans) {
      if (store.instance_complete(model, plan.split_index)) {
        ++result.skipped;
      } else {
        jobs.push_back({&model, &plan});
      }
    }
  }

  InputCache cache(manifest);
  std::mutex result_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const Job& job = jobs[j];
      const std::string tag = *job.model + " split " + std::to_string(job.plan->split_index);
      try {
        TrainedInstance t = train_instance(*job.model, *job.plan, config, manifest, store, &cache);
        std::lock_guard lock(result_mutex);
        ++result.trained;
        log("trained " + tag + ": " + std::to_string(t.epochs_run) + " epochs, best epoch " +
            std::to_string(t.best_epoch));
      } catch (const Error& e) {
        std::lock_guard lock(result_mutex);
        result.failures.push_back({*job.model, job.plan->split_index, e.kind(), e.what()});
        log("FAILED " + tag + ": " + e.what());
      }
    }
  };
  const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(jobs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  for (const auto& model : model_names) {
    for (const auto& plan : plans) {
      if (store.instance_complete(model, plan.split_index)) {
        result.instances.push_back(load_instance(store, model, plan.split_index));
      }
    }
  }
  std::sort(result.failures.begin(), result.failures.end(),
            [](const SuiteFailure& a, const SuiteFailure& b) {
              return std::tie(a.model_name, a.split_index) < std::tie(b.model_name, b.split_index);
            });
  return result;
}

}  // namespace cxrbench
