#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "cxrbench/dataset.hpp"
#include "cxrbench/logits.hpp"
#include "cxrbench/trainer.hpp"

namespace cxrbench {

// Positive class = COVID-19 positive.
struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct Prediction {
  Label truth;
  Label predicted;
};

// Empty input raises DomainError.
ConfusionCounts confusion(std::span<const Prediction> records);

enum class Metric { kAcc, kTpr, kPpv, kF1 };
inline constexpr std::array<Metric, 4> kAllMetrics = {Metric::kAcc, Metric::kTpr, Metric::kPpv,
                                                      Metric::kF1};
std::string_view to_string(Metric metric);  // "ACC", "TPR", ...

struct MetricSet {
  double acc = 0.0;
  double tpr = 0.0;
  double ppv = 0.0;
  double f1 = 0.0;
  // Set when a ratio had a zero denominator and was defined as 0.
  bool degenerate = false;

  double get(Metric metric) const;
};

// Zero denominators yield 0 and set `degenerate`. A zero total raises DomainError.
MetricSet metric_set(const ConfusionCounts& counts);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

struct AggregateStats {
  MeanSd acc;
  MeanSd tpr;
  MeanSd ppv;
  MeanSd f1;
  int n = 0;

  const MeanSd& get(Metric metric) const;
  MeanSd& get(Metric metric);
  MetricSet means() const;
};

// Mean and sample SD (n - 1 divisor). Fewer than two sets raises DomainError.
AggregateStats aggregate(std::span<const MetricSet> metric_sets);

using SubsetMetrics = std::map<EvalSubset, MetricSet>;

// Metrics of one instance on train, validation and test, each computed by
// treating the instance as a single-member ensemble.
SubsetMetrics evaluate_subsets(const TrainedInstance& instance, const LogitCache& cache,
                               const DecisionRule& rule = {});
SubsetMetrics evaluate_subsets(std::string_view model, int split_index, const LogitCache& cache,
                               const DecisionRule& rule = {});

}  // namespace cxrbench
