#include "cxrbench/reports.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "cxrbench/error.hpp"
#include "cxrbench/trainer.hpp"

namespace cxrbench {

namespace fs = std::filesystem;

std::string format_value(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", value);
  return buf;
}

std::string format_gain(double relative_change) {
  if (!std::isfinite(relative_change)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", relative_change * 100.0);
  std::string s = buf;
  if (s == "-0.00%") s = "0.00%";
  return s;
}

std::string to_csv(const Table& table) {
  std::string out;
  for (const auto& note : table.notes) out += "# " + note + "\n";
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += '\n';
  };
  line(table.header);
  for (const auto& row : table.rows) line(row);
  return out;
}

std::string to_text(const Table& table) {
  std::vector<std::size_t> width(table.header.size(), 0);
  auto measure = [&width](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size() && i < width.size(); ++i) {
      width[i] = std::max(width[i], cells[i].size());
    }
  };
  measure(table.header);
  for (const auto& row : table.rows) measure(row);

  std::string out = table.title + "\n\n";
  auto line = [&](const std::vector<std::string>& cells) {
    std::string text;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::string pad(width[i] - cells[i].size(), ' ');
      // First column left-aligned, numbers right-aligned.
      text += i == 0 ? cells[i] + pad : "  " + pad + cells[i];
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out += text + '\n';
  };
  line(table.header);
  std::size_t total = 0;
  for (std::size_t i = 0; i < width.size(); ++i) total += width[i] + (i ? 2 : 0);
  out += std::string(total, '-') + '\n';
  for (const auto& row : table.rows) line(row);
  if (!table.notes.empty()) out += '\n';
  for (const auto& note : table.notes) out += note + '\n';
  return out;
}

namespace {

std::vector<std::string> mean_sd_header(std::string first) {
  std::vector<std::string> h{std::move(first)};
  for (Metric m : kAllMetrics) {
    h.push_back(std::string(to_string(m)) + " mean");
    h.push_back(std::string(to_string(m)) + " sd");
  }
  return h;
}

std::vector<std::string> mean_gain_header(std::string first) {
  std::vector<std::string> h{std::move(first)};
  for (Metric m : kAllMetrics) {
    h.push_back(std::string(to_string(m)) + " mean");
    h.push_back(std::string(to_string(m)) + " gain");
  }
  return h;
}

std::vector<std::string> mean_sd_row(const std::string& label, const AggregateStats& s) {
  std::vector<std::string> row{label};
  for (Metric m : kAllMetrics) {
    row.push_back(format_value(s.get(m).mean));
    row.push_back(format_value(s.get(m).sd));
  }
  return row;
}

const std::string kSdNote = "sd: sample standard deviation (n - 1) over the five instances";

Table gained_table(std::string title, std::string first,
                   const std::vector<std::pair<std::string, GainedResult>>& rows,
                   std::string baseline_note) {
  Table t{std::move(title), mean_gain_header(std::move(first)), {}, {}};
  std::array<double, 4> value_sum{}, gain_sum{};
  for (const auto& [label, result] : rows) {
    std::vector<std::string> row{label};
    for (std::size_t i = 0; i < kAllMetrics.size(); ++i) {
      const MetricGain& g = result.gains.get(kAllMetrics[i]);
      row.push_back(format_value(result.ensemble.get(kAllMetrics[i])));
      row.push_back(format_gain(g.relative_change));
      value_sum[i] += result.ensemble.get(kAllMetrics[i]);
      gain_sum[i] += g.relative_change;
    }
    t.rows.push_back(std::move(row));
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    std::vector<std::string> avg{"Average"};
    for (std::size_t i = 0; i < kAllMetrics.size(); ++i) {
      avg.push_back(format_value(value_sum[i] / n));
      avg.push_back(format_gain(gain_sum[i] / n));
    }
    t.rows.push_back(std::move(avg));
  }
  t.notes.push_back("gain: relative change (ensemble / baseline - 1) against " +
                    std::move(baseline_note));
  return t;
}

}  // namespace

std::string topk_label(int k, int n_models) {
  if (k == n_models && n_models > 7) return "All models";
  return "Top " + std::to_string(k) + " models";
}

Table models_summary_table(const std::vector<ModelRanking>& ranked) {
  Table t{"Single-instance test metrics per model (mean and sd over five instances)",
          mean_sd_header("Model"), {}, {kSdNote, "rows sorted by descending mean F1"}};
  std::array<double, 4> mean_sum{}, sd_sum{};
  for (const auto& m : ranked) {
    t.rows.push_back(mean_sd_row(m.model, m.stats));
    for (std::size_t i = 0; i < kAllMetrics.size(); ++i) {
      mean_sum[i] += m.stats.get(kAllMetrics[i]).mean;
      sd_sum[i] += m.stats.get(kAllMetrics[i]).sd;
    }
  }
  if (!ranked.empty()) {
    const double n = static_cast<double>(ranked.size());
    std::vector<std::string> avg{"Average"};
    for (std::size_t i = 0; i < kAllMetrics.size(); ++i) {
      avg.push_back(format_value(mean_sum[i] / n));
      avg.push_back(format_value(sd_sum[i] / n));
    }
    t.rows.push_back(std::move(avg));
  }
  return t;
}

Table heterogeneous_table(const std::vector<std::pair<std::string, AggregateStats>>& rows) {
  Table t{"Ensembles of the top-k models, one instance each (mean and sd over five ensembles)",
          mean_sd_header("Models"), {}, {kSdNote, "ensemble i combines instance i of each model"}};
  for (const auto& [label, stats] : rows) t.rows.push_back(mean_sd_row(label, stats));
  return t;
}

Table homogeneous_table(const std::vector<std::pair<std::string, GainedResult>>& rows) {
  return gained_table("Ensembles of the five instances of each model", "Model", rows,
                      "the model's mean single-instance metrics");
}

Table topk_all_instances_table(const std::vector<std::pair<std::string, GainedResult>>& rows) {
  return gained_table("Ensembles of the top-k models using all five instances of each", "Models",
                      rows, "the matching one-instance-per-model ensemble means");
}

Table subsets_table(Metric metric, const std::vector<SubsetRow>& rows) {
  Table t{std::string(to_string(metric)) +
              " per subset (mean over five instances)",
          {"Model", "Train", "Validation", "Test"},
          {},
          {}};
  for (const auto& r : rows) {
    t.rows.push_back({r.model, format_value(r.mean.at(EvalSubset::kTrain)),
                      format_value(r.mean.at(EvalSubset::kValidation)),
                      format_value(r.mean.at(EvalSubset::kTest))});
  }
  return t;
}

LogitCache load_logit_cache(const RunStore& store, const std::vector<std::string>& models) {
  std::string missing;
  for (const auto& model : models) {
    for (int i = 1; i <= kNumSplits; ++i) {
      if (!store.instance_complete(model, i)) {
        missing += (missing.empty() ? "" : ", ") + ("(" + model + ", " + std::to_string(i) + ")");
      }
    }
  }
  if (!missing.empty()) throw DataError("store is missing completed instances: " + missing);
  LogitCache cache;
  for (const auto& model : models) {
    for (int i = 1; i <= kNumSplits; ++i) {
      cache.add(parse_logits_csv(read_file(store.instance_artifact(model, i, artifact::kLogits))));
    }
  }
  return cache;
}

std::vector<fs::path> emit_reports(const RunStore& store, const RunConfig& config,
                                   ReportGroup group) {
  const auto& models = config.model_names;
  const LogitCache cache = load_logit_cache(store, models);
  const DecisionRule& rule = config.rule;
  const std::string rule_note = "decision rule: " + describe(rule);

  std::vector<ModelRanking> summaries;
  for (const auto& m : models) summaries.push_back({m, single_instance_stats(m, cache, rule)});
  const std::vector<std::string> ranking = rank_models(summaries);
  std::vector<ModelRanking> ranked;
  for (const auto& name : ranking) {
    ranked.push_back(*std::find_if(summaries.begin(), summaries.end(),
                                   [&](const ModelRanking& r) { return r.model == name; }));
  }

  std::vector<fs::path> written;
  auto emit = [&](const std::string& stem, Table table) {
    table.notes.push_back(rule_note);
    table.notes.push_back("run: " + config.run_id);
    const fs::path csv = store.reports_dir() / (stem + ".csv");
    const fs::path txt = store.reports_dir() / (stem + ".txt");
    store.commit(csv, to_csv(table));
    store.commit(txt, to_text(table));
    written.push_back(csv);
    written.push_back(txt);
  };

  if (group != ReportGroup::kEnsembles) {
    emit("models_summary", models_summary_table(ranked));
    std::map<std::string, std::array<std::map<EvalSubset, double>, 4>> sums;
    for (const auto& name : ranking) {
      for (int i = 1; i <= kNumSplits; ++i) {
        for (const auto& [subset, m] : evaluate_subsets(name, i, cache, rule)) {
          for (std::size_t k = 0; k < kAllMetrics.size(); ++k) {
            sums[name][k][subset] += m.get(kAllMetrics[k]) / kNumSplits;
          }
        }
      }
    }
    static constexpr const char* kStems[] = {"subsets_acc", "subsets_tpr", "subsets_ppv",
                                             "subsets_f1"};
    for (std::size_t k = 0; k < kAllMetrics.size(); ++k) {
      std::vector<SubsetRow> rows;
      for (const auto& name : ranking) rows.push_back({name, sums[name][k]});
      emit(kStems[k], subsets_table(kAllMetrics[k], rows));
    }
  }

  if (group != ReportGroup::kModels) {
    const int n = static_cast<int>(ranking.size());
    std::vector<std::pair<std::string, AggregateStats>> hetero;
    std::vector<std::pair<std::string, GainedResult>> all_instances;
    for (int k : topk_configurations(n)) {
      hetero.emplace_back(topk_label(k, n), run_heterogeneous_topk(k, ranking, cache, rule).stats);
      all_instances.emplace_back(topk_label(k, n),
                                 run_topk_all_instances(k, ranking, cache, rule));
    }
    std::vector<std::pair<std::string, GainedResult>> homogeneous;
    for (const auto& name : ranking) {
      homogeneous.emplace_back(name, run_homogeneous(name, cache, rule));
    }
    emit("ensembles_heterogeneous", heterogeneous_table(hetero));
    emit("ensembles_homogeneous", homogeneous_table(homogeneous));
    emit("ensembles_topk_all_instances", topk_all_instances_table(all_instances));
  }
  return written;
}

}  // namespace cxrbench
