#include "cxrbench/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cxrbench/error.hpp"

namespace cxrbench {

void validate(const EnsembleSpec& spec) {
  if (spec.members.empty()) throw ValidationError("ensemble has no members");
  std::set<std::pair<std::string, int>> seen;
  std::set<std::string> models;
  std::set<int> splits;
  for (const auto& m : spec.members) {
    if (m.split_index < 1 || m.split_index > kNumSplits) {
      throw ValidationError("split_index must lie in 1..5");
    }
    if (!seen.emplace(m.model, m.split_index).second) {
      throw ValidationError("duplicate ensemble member (" + m.model + ", " +
                            std::to_string(m.split_index) + ")");
    }
    models.insert(m.model);
    splits.insert(m.split_index);
  }
  switch (spec.kind) {
    case EnsembleKind::kSingleton:
      if (spec.members.size() != 1) throw ValidationError("singleton ensemble needs 1 member");
      break;
    case EnsembleKind::kHomogeneous:
      if (models.size() != 1 || splits.size() != static_cast<std::size_t>(kNumSplits)) {
        throw ValidationError("homogeneous ensemble = one model with all 5 instances");
      }
      break;
    case EnsembleKind::kHeterogeneousTopK:
      if (splits.size() != 1 || models.size() != spec.members.size()) {
        throw ValidationError("heterogeneous ensemble = distinct models sharing one split index");
      }
      break;
    case EnsembleKind::kTopKAllInstances:
      if (spec.members.size() != models.size() * kNumSplits) {
        throw ValidationError("top-k all-instances ensemble needs all 5 instances of each model");
      }
      break;
  }
}

std::vector<std::pair<std::string, LogitPair>> ensemble_logits(const EnsembleSpec& spec,
                                                               const LogitCache& cache,
                                                               EvalSubset subset) {
  validate(spec);
  std::vector<const std::vector<LogitRecord>*> slices;
  for (const auto& m : spec.members) slices.push_back(&cache.slice(m.model, m.split_index, subset));
  const auto& first = *slices.front();
  for (std::size_t s = 1; s < slices.size(); ++s) {
    const auto& other = *slices[s];
    const bool same = other.size() == first.size() &&
                      std::equal(first.begin(), first.end(), other.begin(),
                                 [](const LogitRecord& a, const LogitRecord& b) {
                                   return a.image_id == b.image_id;
                                 });
    if (!same) {
      throw DataError("ensemble members (" + spec.members.front().model + ", " +
                      std::to_string(spec.members.front().split_index) + ") and (" +
                      spec.members[s].model + ", " + std::to_string(spec.members[s].split_index) +
                      ") cover different " + std::string(to_string(subset)) + " images");
    }
  }

  std::vector<std::pair<std::string, LogitPair>> out;
  out.reserve(first.size());
  std::vector<const LogitRecord*> members(slices.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    for (std::size_t s = 0; s < slices.size(); ++s) members[s] = &(*slices[s])[i];
    out.emplace_back(first[i].image_id, combine_logits(members));
  }
  return out;
}

MetricSet evaluate_ensemble(const EnsembleSpec& spec, const LogitCache& cache,
                            const DecisionRule& rule, EvalSubset subset) {
  const auto averaged = ensemble_logits(spec, cache, subset);
  const auto& truth = cache.slice(spec.members.front().model, spec.members.front().split_index,
                                  subset);
  std::vector<Prediction> predictions;
  predictions.reserve(averaged.size());
  for (std::size_t i = 0; i < averaged.size(); ++i) {
    predictions.push_back({truth[i].true_label, decide(averaged[i].second, rule)});
  }
  return metric_set(confusion(predictions));
}

const MetricGain& GainReport::get(Metric metric) const {
  switch (metric) {
    case Metric::kAcc: return acc;
    case Metric::kTpr: return tpr;
    case Metric::kPpv: return ppv;
    case Metric::kF1: return f1;
  }
  return acc;
}

MetricGain relative_gain(double baseline_mean, double ensemble_value) {
  MetricGain g{baseline_mean, ensemble_value, std::numeric_limits<double>::quiet_NaN()};
  if (baseline_mean != 0.0) g.relative_change = ensemble_value / baseline_mean - 1.0;
  return g;
}

GainReport gain_report(const MetricSet& baseline, const MetricSet& ensemble) {
  return {relative_gain(baseline.acc, ensemble.acc), relative_gain(baseline.tpr, ensemble.tpr),
          relative_gain(baseline.ppv, ensemble.ppv), relative_gain(baseline.f1, ensemble.f1)};
}

std::vector<std::string> rank_models(std::vector<ModelRanking> models) {
  std::stable_sort(models.begin(), models.end(), [](const ModelRanking& a, const ModelRanking& b) {
    if (a.stats.f1.mean != b.stats.f1.mean) return a.stats.f1.mean > b.stats.f1.mean;
    if (a.stats.acc.mean != b.stats.acc.mean) return a.stats.acc.mean > b.stats.acc.mean;
    return a.model < b.model;
  });
  std::vector<std::string> out;
  for (auto& m : models) out.push_back(std::move(m.model));
  return out;
}

namespace {

void require_complete(const std::vector<std::string>& models, const LogitCache& cache) {
  std::string missing;
  for (const auto& model : models) {
    for (int i = 1; i <= kNumSplits; ++i) {
      if (!cache.has(model, i, EvalSubset::kTest)) {
        missing += (missing.empty() ? "" : ", ") + ("(" + model + ", " + std::to_string(i) + ")");
      }
    }
  }
  if (!missing.empty()) {
    throw DataError("logit cache is missing test records for " + missing);
  }
}

std::vector<std::string> top(int k, const std::vector<std::string>& ranking) {
  if (k < 1 || k > static_cast<int>(ranking.size())) {
    throw DomainError("k = " + std::to_string(k) + " outside 1.." +
                      std::to_string(ranking.size()));
  }
  return {ranking.begin(), ranking.begin() + k};
}

}  // namespace

AggregateStats single_instance_stats(const std::string& model, const LogitCache& cache,
                                     const DecisionRule& rule) {
  require_complete({model}, cache);
  std::vector<MetricSet> sets;
  for (int i = 1; i <= kNumSplits; ++i) {
    sets.push_back(evaluate_ensemble({{{model, i}}, EnsembleKind::kSingleton}, cache, rule));
  }
  return aggregate(sets);
}

HeterogeneousResult run_heterogeneous_topk(int k, const std::vector<std::string>& ranking,
                                           const LogitCache& cache, const DecisionRule& rule) {
  const auto models = top(k, ranking);
  require_complete(models, cache);
  HeterogeneousResult out;
  out.k = k;
  for (int i = 1; i <= kNumSplits; ++i) {
    EnsembleSpec spec;
    spec.kind = k == 1 ? EnsembleKind::kSingleton : EnsembleKind::kHeterogeneousTopK;
    for (const auto& m : models) spec.members.push_back({m, i});
    out.per_split.push_back(evaluate_ensemble(spec, cache, rule));
  }
  out.stats = aggregate(out.per_split);
  return out;
}

GainedResult run_homogeneous(const std::string& model, const LogitCache& cache,
                             const DecisionRule& rule) {
  const AggregateStats baseline = single_instance_stats(model, cache, rule);
  EnsembleSpec spec;
  spec.kind = EnsembleKind::kHomogeneous;
  for (int i = 1; i <= kNumSplits; ++i) spec.members.push_back({model, i});
  GainedResult out;
  out.ensemble = evaluate_ensemble(spec, cache, rule);
  out.gains = gain_report(baseline.means(), out.ensemble);
  return out;
}

GainedResult run_topk_all_instances(int k, const std::vector<std::string>& ranking,
                                    const LogitCache& cache, const DecisionRule& rule) {
  const auto models = top(k, ranking);
  const HeterogeneousResult baseline = run_heterogeneous_topk(k, ranking, cache, rule);
  EnsembleSpec spec;
  spec.kind = EnsembleKind::kTopKAllInstances;
  for (const auto& m : models) {
    for (int i = 1; i <= kNumSplits; ++i) spec.members.push_back({m, i});
  }
  GainedResult out;
  out.ensemble = evaluate_ensemble(spec, cache, rule);
  out.gains = gain_report(baseline.stats.means(), out.ensemble);
  return out;
}

std::vector<int> topk_configurations(int n_models) {
  std::vector<int> out;
  for (int k = 2; k <= std::min(7, n_models); ++k) out.push_back(k);
  if (n_models > 7) out.push_back(n_models);
  return out;
}

}  // namespace cxrbench
