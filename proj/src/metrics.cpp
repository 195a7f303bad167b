#include "cxrbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "cxrbench/error.hpp"

namespace cxrbench {

ConfusionCounts confusion(std::span<const Prediction> records) {
  if (records.empty()) throw DomainError("confusion counts need at least one record");
  ConfusionCounts c;
  for (const auto& r : records) {
    const bool truth = r.truth == Label::kPositive;
    const bool pred = r.predicted == Label::kPositive;
    if (truth && pred) ++c.tp;
    else if (truth) ++c.fn;
    else if (pred) ++c.fp;
    else ++c.tn;
  }
  return c;
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::kAcc: return "ACC";
    case Metric::kTpr: return "TPR";
    case Metric::kPpv: return "PPV";
    case Metric::kF1: return "F1";
  }
  return "?";
}

double MetricSet::get(Metric metric) const {
  switch (metric) {
    case Metric::kAcc: return acc;
    case Metric::kTpr: return tpr;
    case Metric::kPpv: return ppv;
    case Metric::kF1: return f1;
  }
  return 0.0;
}

MetricSet metric_set(const ConfusionCounts& c) {
  if (c.tp < 0 || c.fp < 0 || c.tn < 0 || c.fn < 0) throw DomainError("negative count");
  if (c.total() == 0) throw DomainError("metrics need a nonzero total");
  MetricSet m;
  auto ratio = [&m](std::int64_t num, std::int64_t den) {
    if (den == 0) {
      m.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.acc = ratio(c.tp + c.tn, c.total());
  m.tpr = ratio(c.tp, c.tp + c.fn);
  m.ppv = ratio(c.tp, c.tp + c.fp);
  if (m.tpr + m.ppv > 0.0) {
    m.f1 = 2.0 * m.tpr * m.ppv / (m.tpr + m.ppv);
  } else {
    m.f1 = 0.0;
    m.degenerate = true;
  }
  return m;
}

const MeanSd& AggregateStats::get(Metric metric) const {
  switch (metric) {
    case Metric::kAcc: return acc;
    case Metric::kTpr: return tpr;
    case Metric::kPpv: return ppv;
    case Metric::kF1: return f1;
  }
  return acc;
}

MeanSd& AggregateStats::get(Metric metric) {
  return const_cast<MeanSd&>(std::as_const(*this).get(metric));
}

MetricSet AggregateStats::means() const { return {acc.mean, tpr.mean, ppv.mean, f1.mean}; }

AggregateStats aggregate(std::span<const MetricSet> sets) {
  if (sets.size() < 2) {
    throw DomainError("standard deviation needs at least 2 repetitions, got " +
                      std::to_string(sets.size()));
  }
  AggregateStats out;
  out.n = static_cast<int>(sets.size());
  for (Metric metric : kAllMetrics) {
    // Welford's update.
    double mean = 0.0, m2 = 0.0;
    std::size_t k = 0;
    for (const auto& s : sets) {
      const double x = s.get(metric);
      ++k;
      const double delta = x - mean;
      mean += delta / static_cast<double>(k);
      m2 += delta * (x - mean);
    }
    MeanSd& dst = out.get(metric);
    dst.mean = mean;
    dst.sd = std::sqrt(std::max(0.0, m2) / static_cast<double>(k - 1));
  }
  return out;
}

SubsetMetrics evaluate_subsets(std::string_view model, int split_index, const LogitCache& cache,
                               const DecisionRule& rule) {
  SubsetMetrics out;
  for (EvalSubset subset : {EvalSubset::kTrain, EvalSubset::kValidation, EvalSubset::kTest}) {
    const auto& records = cache.slice(model, split_index, subset);
    std::vector<Prediction> predictions;
    predictions.reserve(records.size());
    for (const auto& r : records) {
      const LogitRecord* member = &r;
      predictions.push_back(
          {r.true_label, decide(combine_logits(std::span(&member, 1)), rule)});
    }
    out[subset] = metric_set(confusion(predictions));
  }
  return out;
}

SubsetMetrics evaluate_subsets(const TrainedInstance& instance, const LogitCache& cache,
                               const DecisionRule& rule) {
  return evaluate_subsets(instance.model_name, instance.split_index, cache, rule);
}

}  // namespace cxrbench
