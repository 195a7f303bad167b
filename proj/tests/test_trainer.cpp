#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <set>

#include "cxrbench/dataset.hpp"
#include "cxrbench/error.hpp"
#include "cxrbench/logits.hpp"
#include "cxrbench/metrics.hpp"
#include "cxrbench/trainer.hpp"
#include "support.hpp"

using namespace cxrbench;
using testing::TempDir;

namespace {

// Reference scan: best = first argmin so far; stop at the first epoch where
// `patience` consecutive epochs failed to beat the running best.
std::pair<int, int> scan_oracle(const std::vector<double>& losses, int patience) {
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  for (int e = 1; e <= static_cast<int>(losses.size()); ++e) {
    if (losses[e - 1] < best) {
      best = losses[e - 1];
      best_epoch = e;
    }
    if (e - best_epoch >= patience) return {best_epoch, e};
  }
  return {best_epoch, 0};
}

std::pair<int, int> drive(const std::vector<double>& losses, int patience) {
  EarlyStopState state;
  for (int e = 1; e <= static_cast<int>(losses.size()); ++e) {
    const auto r = early_stop_step(state, e, losses[e - 1], patience);
    state = r.state;
    CHECK(state.epochs_since_improve <= patience);
    if (r.decision == StopDecision::kStop) return {state.best_epoch, e};
  }
  return {state.best_epoch, 0};
}

struct SmallData {
  TempDir dir{"trainer"};
  Manifest manifest;
  std::vector<SplitPlan> plans;
  TrainConfig config;

  explicit SmallData(int n = 10, int test = 4, double difficulty = 0.0, int size = 16) {
    SynthOptions o;
    o.n_per_class = n;
    o.test_per_class = test;
    o.image_size = size;
    o.seed = 3;
    o.difficulty = difficulty;
    manifest = generate_synthetic(dir / "data", o);
    plans = build_splits(manifest, 0.2, {1, 2, 3, 4, 5});
    config.max_epochs = 3;
    config.patience = 2;
    config.batch_size = 8;
    config.stub_input_size = size;
    config.class_weights = compute_class_weights(count_classes(manifest));
    config.run_id = "t";
  }
};

}  // namespace

TEST_CASE("scripted early-stopping sequence") {
  EarlyStopState s;
  const std::vector<double> losses = {3, 2, 4, 5};
  std::vector<StopDecision> decisions;
  for (int e = 1; e <= 4; ++e) {
    const auto r = early_stop_step(s, e, losses[e - 1], 2);
    s = r.state;
    decisions.push_back(r.decision);
  }
  CHECK(decisions == std::vector<StopDecision>{StopDecision::kContinue, StopDecision::kContinue,
                                               StopDecision::kContinue, StopDecision::kStop});
  CHECK(s.best_epoch == 2);
  CHECK(s.best_loss == 2.0);
}

TEST_CASE("strictly decreasing losses never stop") {
  std::vector<double> losses;
  for (int e = 0; e < 50; ++e) losses.push_back(10.0 - 0.1 * e);
  CHECK(drive(losses, 10) == std::pair{50, 0});
}

TEST_CASE("ties do not count as improvement") {
  CHECK(drive({1.0, 1.0, 1.0}, 2) == std::pair{1, 3});
}

TEST_CASE("early stopping matches the scan oracle") {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> loss(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int trial = 0; trial < 1000; ++trial) {
    const int patience = std::array{2, 5, 7, 10}[trial % 4];
    std::vector<double> losses(trial % 2 ? 100 : 60);
    // Odd trials use a coarse grid so exact ties are common.
    for (auto& v : losses) v = trial % 3 == 0 ? coarse(gen) / 5.0 : loss(gen);
    CHECK(drive(losses, patience) == scan_oracle(losses, patience));
  }
}

TEST_CASE("early stopping rejects out-of-order epochs") {
  EarlyStopState s;
  s = early_stop_step(s, 1, 1.0, 3).state;
  CHECK_THROWS_AS(early_stop_step(s, 3, 1.0, 3), ProtocolError);
  CHECK_THROWS_AS(early_stop_step(s, 1, 1.0, 3), ProtocolError);
  CHECK_THROWS_AS(early_stop_step(EarlyStopState{}, 1, 1.0, 0), ProtocolError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK(validate(c).empty());
  c.patience = 60;
  CHECK(validate(c).size() == 1);
  c = {};
  c.lr_head = -1.0;
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = {};
  c.max_epochs = 0;
  CHECK_THROWS_AS(validate(c), ValidationError);
}

TEST_CASE("history and metadata round trip") {
  TrainedInstance t;
  t.model_name = "stub";
  t.split_index = 4;
  t.weights_ref = "instances/stub/split_4/weights.bin";
  t.weights_sha256 = std::string(64, 'a');
  t.epochs_run = 3;
  t.best_epoch = 2;
  t.best_val_loss = 0.1234567890123456789;
  t.init_seed = 0xfedcba9876543210ULL;
  t.shuffle_seed = 17;
  t.history = {{1, 0.7, 0.6, 0.25}, {2, 0.5, 0.1234567890123456789, 0.5}, {3, 0.4, 0.2, 1.0 / 3}};
  const auto h = parse_history_csv(format_history_csv(t.history));
  REQUIRE(h.size() == 3);
  CHECK(h[1].val_loss == t.history[1].val_loss);
  CHECK(std::abs(h[2].wall_seconds - t.history[2].wall_seconds) < 1e-3);
  const auto m = parse_instance_meta(format_instance_meta(t));
  CHECK(m.model_name == t.model_name);
  CHECK(m.split_index == 4);
  CHECK(m.best_val_loss == t.best_val_loss);
  CHECK(m.init_seed == t.init_seed);
  CHECK(m.weights_sha256 == t.weights_sha256);
  CHECK(format_history_csv(t.history).starts_with("epoch,train_loss,val_loss,wall_seconds\n"));
}

TEST_CASE("fit on separable data reaches perfect validation accuracy") {
  SmallData data(200, 0, 0.0, 32);
  InputCache cache(data.manifest);
  const auto spec = resolve_model("stub");
  auto gather = [&](const std::vector<std::string>& ids) {
    LabeledInputs out;
    for (const auto& id : ids) {
      out.inputs.push_back(&cache.get(id, spec));
      out.labels.push_back(static_cast<int>(cache.entry(id).label));
    }
    return out;
  };
  const auto& plan = data.plans[0];
  const auto train = gather(plan.train_ids);
  const auto val = gather(plan.val_ids);
  TrainConfig config = data.config;
  config.max_epochs = 20;
  config.patience = 10;
  config.batch_size = 32;
  auto model = build_classifier(spec, config.head, Init::kRandom, init_seed_for("stub", plan));
  const auto fitted = fit(std::move(model), train, val, config, shuffle_seed_for("stub", plan));

  std::vector<Prediction> predictions;
  for (std::size_t i = 0; i < val.inputs.size(); ++i) {
    predictions.push_back(
        {static_cast<Label>(val.labels[i]), decide(fitted.model.forward(*val.inputs[i]))});
  }
  CHECK(metric_set(confusion(predictions)).acc == 1.0);

  {
    CHECK(fitted.epochs_run <= config.max_epochs);
    CHECK(fitted.epochs_run <= fitted.best_epoch + config.patience);
    CHECK(fitted.history.size() == static_cast<std::size_t>(fitted.epochs_run));
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    for (const auto& r : fitted.history) {
      if (r.val_loss < best) {
        best = r.val_loss;
        best_epoch = r.epoch;
      }
    }
    CHECK(fitted.best_val_loss == best);
    CHECK(fitted.best_epoch == best_epoch);
  }
  {
    // Restored weights are the best-epoch snapshot, bit for bit.
    auto probe = build_classifier(spec, config.head, Init::kRandom, 999);
    probe.deserialize(fitted.best_snapshot);
    CHECK(fitted.model.serialize() == fitted.best_snapshot);
    for (const Planar* p : val.inputs) CHECK(probe.forward(*p) == fitted.model.forward(*p));
  }
  {
    auto again = build_classifier(spec, config.head, Init::kRandom, init_seed_for("stub", plan));
    const auto second = fit(std::move(again), train, val, config, shuffle_seed_for("stub", plan));
    CHECK(second.best_snapshot == fitted.best_snapshot);
    CHECK(second.best_epoch == fitted.best_epoch);
  }
}

TEST_CASE("flat losses with patience beyond the epoch budget run every epoch") {
  SmallData data;
  InputCache cache(data.manifest);
  const auto spec = resolve_model("stub", 16);
  LabeledInputs train, val;
  for (const auto& id : data.plans[0].train_ids) {
    train.inputs.push_back(&cache.get(id, spec));
    train.labels.push_back(static_cast<int>(cache.entry(id).label));
  }
  for (const auto& id : data.plans[0].val_ids) {
    val.inputs.push_back(&cache.get(id, spec));
    val.labels.push_back(static_cast<int>(cache.entry(id).label));
  }
  TrainConfig config = data.config;
  config.max_epochs = 6;
  config.patience = 6;
  config.lr_backbone = 0.0;
  config.lr_head = 0.0;
  const auto fitted = fit(build_classifier(spec, config.head, Init::kRandom, 5), train, val, config, 1);
  CHECK(fitted.epochs_run == 6);
  CHECK(fitted.best_epoch == 1);
  for (const auto& r : fitted.history) CHECK(r.val_loss == fitted.history[0].val_loss);
}

TEST_CASE("non-finite losses raise a training error") {
  SmallData data;
  InputCache cache(data.manifest);
  const auto spec = resolve_model("stub", 16);
  Planar poisoned = cache.get(data.plans[0].train_ids[0], spec);
  poisoned.data[0] = std::nanf("");
  LabeledInputs train{{&poisoned}, {0}};
  LabeledInputs val{{&poisoned}, {0}};
  CHECK_THROWS_AS(fit(build_classifier(spec, {}, Init::kRandom, 5), train, val, data.config, 1),
                  TrainingError);
}

TEST_CASE("train_instance persists every artifact") {
  SmallData data;
  RunStore store(data.dir / "run");
  const auto t = train_instance("stub", data.plans[1], data.config, data.manifest, store);
  CHECK(store.instance_complete("stub", 2));
  CHECK(t.weights_ref == "instances/stub/split_2/weights.bin");
  CHECK(sha256_hex(read_file(store.root() / t.weights_ref)) == t.weights_sha256);
  CHECK(t.init_seed == init_seed_for("stub", data.plans[1]));

  const auto loaded = load_instance(store, "stub", 2);
  CHECK(loaded.best_epoch == t.best_epoch);
  CHECK(loaded.history.size() == t.history.size());

  const auto records = parse_logits_csv(read_file(store.instance_artifact("stub", 2, artifact::kLogits)));
  CHECK(records.size() == data.manifest.size());
  std::map<EvalSubset, std::size_t> per_subset;
  for (const auto& r : records) ++per_subset[r.subset];
  CHECK(per_subset[EvalSubset::kTrain] == data.plans[1].train_ids.size());
  CHECK(per_subset[EvalSubset::kValidation] == data.plans[1].val_ids.size());
  CHECK(per_subset[EvalSubset::kTest] == 8);

  // Reloaded weights reproduce the stored logits exactly.
  auto model = build_classifier(resolve_model("stub", 16), data.config.head, Init::kRandom, 1);
  const auto blob = read_file(store.instance_artifact("stub", 2, artifact::kWeights));
  model.deserialize(std::span(reinterpret_cast<const std::uint8_t*>(blob.data()), blob.size()));
  InputCache cache(data.manifest);
  for (const auto& r : records) {
    const auto z = model.forward(cache.get(r.image_id, model.spec()));
    CHECK(z[0] == r.logit_negative);
    CHECK(z[1] == r.logit_positive);
  }
}

TEST_CASE("training failures are recorded in the store") {
  SmallData data;
  RunStore store(data.dir / "run");
  SUBCASE("missing image names the id") {
    const std::string victim = data.plans[0].train_ids[0];
    for (const auto& e : data.manifest) {
      if (e.image_id == victim) std::filesystem::remove(e.path);
    }
    try {
      train_instance("stub", data.plans[0], data.config, data.manifest, store);
      FAIL("expected a data error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(victim) != std::string::npos);
    }
    CHECK(std::filesystem::exists(store.instance_artifact("stub", 1, artifact::kError)));
    CHECK_FALSE(store.instance_complete("stub", 1));
  }
  SUBCASE("divergence") {
    TrainConfig config = data.config;
    config.class_weights = {1e308, 1e308};
    CHECK_THROWS_AS(train_instance("stub", data.plans[0], config, data.manifest, store),
                    TrainingError);
    const auto text = read_file(store.instance_artifact("stub", 1, artifact::kError));
    CHECK(text.starts_with("training"));
    CHECK_FALSE(store.instance_complete("stub", 1));
  }
  SUBCASE("unavailable backbone") {
    CHECK_THROWS_AS(train_instance("DenseNet169", data.plans[0], data.config, data.manifest, store),
                    InitializationError);
  }
}

TEST_CASE("suite bookkeeping and resume") {
  SmallData data;
  RunStore store(data.dir / "run");
  const std::vector<std::string> models = {"stub", "stub-b"};
  SuiteOptions options;
  options.workers = 2;
  const auto first = train_suite(models, data.plans, data.config, data.manifest, store, options);
  CHECK(first.failures.empty());
  CHECK(first.trained == 10);
  CHECK(first.skipped == 0);
  REQUIRE(first.instances.size() == 10);
  std::set<std::pair<std::string, int>> keys;
  for (const auto& t : first.instances) keys.insert({t.model_name, t.split_index});
  CHECK(keys.size() == 10);

  std::size_t records = 0;
  for (const auto& t : first.instances) {
    records += parse_logits_csv(read_file(store.instance_artifact(t.model_name, t.split_index,
                                                                  artifact::kLogits)))
                   .size();
  }
  CHECK(records == 10 * data.manifest.size());

  const auto blob = read_file(store.instance_artifact("stub-b", 3, artifact::kWeights));
  const auto second = train_suite(models, data.plans, data.config, data.manifest, store);
  CHECK(second.trained == 0);
  CHECK(second.skipped == 10);
  CHECK(second.instances.size() == 10);
  CHECK(read_file(store.instance_artifact("stub-b", 3, artifact::kWeights)) == blob);

  SUBCASE("a removed instance is retrained identically") {
    std::filesystem::remove_all(store.instance_dir("stub-b", 3));
    const auto third = train_suite(models, data.plans, data.config, data.manifest, store);
    CHECK(third.trained == 1);
    CHECK(read_file(store.instance_artifact("stub-b", 3, artifact::kWeights)) == blob);
  }
  SUBCASE("worker count does not change results") {
    RunStore serial(data.dir / "serial");
    train_suite(models, data.plans, data.config, data.manifest, serial);
    CHECK(read_file(serial.instance_artifact("stub-b", 3, artifact::kWeights)) == blob);
    CHECK(read_file(serial.instance_artifact("stub", 5, artifact::kLogits)) ==
          read_file(store.instance_artifact("stub", 5, artifact::kLogits)));
  }
}

TEST_CASE("suite failures do not stop other instances") {
  SmallData data;
  RunStore store(data.dir / "run");
  const auto r = train_suite({"stub", "VGG16"}, data.plans, data.config, data.manifest, store);
  CHECK(r.trained == 5);
  REQUIRE(r.failures.size() == 5);
  CHECK(r.failures[0].model_name == "VGG16");
  CHECK(r.failures[0].kind == std::string("initialization"));
  CHECK_THROWS_AS(train_suite({"stub"}, {data.plans[0]}, data.config, data.manifest, store),
                  ValidationError);
}
