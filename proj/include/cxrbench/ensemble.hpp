#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cxrbench/logits.hpp"
#include "cxrbench/metrics.hpp"

namespace cxrbench {

enum class EnsembleKind { kSingleton, kHeterogeneousTopK, kHomogeneous, kTopKAllInstances };

struct EnsembleMember {
  std::string model;
  int split_index = 1;
  bool operator==(const EnsembleMember&) const = default;
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;
  EnsembleKind kind = EnsembleKind::kSingleton;
};

// Checks the structural invariants of each kind (ValidationError).
void validate(const EnsembleSpec& spec);

// Averages member logits per test image (pre-softmax), decides, and scores.
// Members must cover the same image set (DataError otherwise).
MetricSet evaluate_ensemble(const EnsembleSpec& spec, const LogitCache& cache,
                            const DecisionRule& rule = {}, EvalSubset subset = EvalSubset::kTest);

// Averaged logits per image id, in image-id order.
std::vector<std::pair<std::string, LogitPair>> ensemble_logits(const EnsembleSpec& spec,
                                                               const LogitCache& cache,
                                                               EvalSubset subset);

struct MetricGain {
  double baseline_mean = 0.0;
  double ensemble_value = 0.0;
  // ensemble / baseline - 1 (NaN when the baseline is 0).
  double relative_change = 0.0;
  double percent() const { return relative_change * 100.0; }
};

struct GainReport {
  MetricGain acc;
  MetricGain tpr;
  MetricGain ppv;
  MetricGain f1;

  const MetricGain& get(Metric metric) const;
};

MetricGain relative_gain(double baseline_mean, double ensemble_value);
GainReport gain_report(const MetricSet& baseline_means, const MetricSet& ensemble);

struct ModelRanking {
  std::string model;
  AggregateStats stats;
};

// Descending mean F1; ties by mean ACC, then name.
std::vector<std::string> rank_models(std::vector<ModelRanking> models);

// Single-instance stats of one model over its five test-set instances.
AggregateStats single_instance_stats(const std::string& model, const LogitCache& cache,
                                     const DecisionRule& rule = {});

struct HeterogeneousResult {
  int k = 0;
  std::vector<MetricSet> per_split;  // one ensemble per split index
  AggregateStats stats;
};

// For each split i, ensemble {(ranking[j], i) : j < k}.
HeterogeneousResult run_heterogeneous_topk(int k, const std::vector<std::string>& ranking,
                                           const LogitCache& cache,
                                           const DecisionRule& rule = {});

struct GainedResult {
  MetricSet ensemble;
  GainReport gains;
};

// All five instances of one model; baseline = that model's single-instance means.
GainedResult run_homogeneous(const std::string& model, const LogitCache& cache,
                             const DecisionRule& rule = {});

// All five instances of each top-k model; baseline = heterogeneous top-k means.
GainedResult run_topk_all_instances(int k, const std::vector<std::string>& ranking,
                                    const LogitCache& cache, const DecisionRule& rule = {});

// Table configurations: k = 2..min(7, n), plus all n models when n > 7.
std::vector<int> topk_configurations(int n_models);

}  // namespace cxrbench
