#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cxrbench/config.hpp"
#include "cxrbench/ensemble.hpp"
#include "cxrbench/metrics.hpp"
#include "cxrbench/store.hpp"

namespace cxrbench {

struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> notes;  // emitted as '#' lines in CSV, footer in text
};

std::string to_csv(const Table& table);
std::string to_text(const Table& table);

// Four decimals.
std::string format_value(double value);
// Relative change as a signed two-decimal percentage: 0.0112071 -> "1.12%".
std::string format_gain(double relative_change);

// Per-model mean/SD rows in the given order plus an Average row.
Table models_summary_table(const std::vector<ModelRanking>& ranked);
Table heterogeneous_table(const std::vector<std::pair<std::string, AggregateStats>>& rows);
Table homogeneous_table(const std::vector<std::pair<std::string, GainedResult>>& rows);
Table topk_all_instances_table(const std::vector<std::pair<std::string, GainedResult>>& rows);

// Per-model instance-averaged metric on train / validation / test.
struct SubsetRow {
  std::string model;
  std::map<EvalSubset, double> mean;
};
Table subsets_table(Metric metric, const std::vector<SubsetRow>& rows);

std::string topk_label(int k, int n_models);

enum class ReportGroup { kModels, kEnsembles, kAll };

// Computes every table from the store's logit cache and writes CSV + text
// under reports/. Missing (model, instance) artifacts raise DataError
// listing them. Returns the written paths.
std::vector<std::filesystem::path> emit_reports(const RunStore& store, const RunConfig& config,
                                                ReportGroup group = ReportGroup::kAll);

LogitCache load_logit_cache(const RunStore& store, const std::vector<std::string>& models);

}  // namespace cxrbench
