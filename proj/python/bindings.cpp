#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cxrbench/config.hpp"
#include "cxrbench/dataset.hpp"
#include "cxrbench/ensemble.hpp"
#include "cxrbench/error.hpp"
#include "cxrbench/experiment.hpp"
#include "cxrbench/logits.hpp"
#include "cxrbench/metrics.hpp"
#include "cxrbench/model_zoo.hpp"
#include "cxrbench/reports.hpp"
#include "cxrbench/trainer.hpp"

namespace py = pybind11;
using namespace cxrbench;

namespace {

py::dict metrics_dict(const MetricSet& m) {
  py::dict d;
  d["acc"] = m.acc;
  d["tpr"] = m.tpr;
  d["ppv"] = m.ppv;
  d["f1"] = m.f1;
  d["degenerate"] = m.degenerate;
  return d;
}

Label label_of(const std::string& token) {
  if (token == "positive") return Label::kPositive;
  if (token == "negative") return Label::kNegative;
  throw ValidationError("label must be 'positive' or 'negative', got '" + token + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Transfer-learning benchmark harness core";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  auto validation = py::register_exception<ValidationError>(m, "ValidationError", error.ptr());
  auto data = py::register_exception<DataError>(m, "DataError", error.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", error.ptr());
  py::register_exception<LookupError>(m, "LookupError", validation.ptr());
  py::register_exception<DomainError>(m, "DomainError", validation.ptr());
  py::register_exception<ParseError>(m, "ParseError", data.ptr());

  m.def(
      "class_weights",
      [](std::int64_t negatives, std::int64_t positives) {
        const auto w = compute_class_weights({negatives, positives, negatives + positives});
        return py::make_tuple(w.w_negative, w.w_positive);
      },
      py::arg("negatives"), py::arg("positives"), "Inverse-frequency weights t / (2 c_i).");

  m.def("stratified_count", &stratified_count, py::arg("class_count"), py::arg("val_fraction"));

  m.def(
      "metric_set",
      [](std::int64_t tp, std::int64_t fp, std::int64_t tn, std::int64_t fn) {
        return metrics_dict(metric_set({tp, fp, tn, fn}));
      },
      py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));

  m.def(
      "relative_gain",
      [](double baseline, double value) { return relative_gain(baseline, value).relative_change; },
      py::arg("baseline"), py::arg("value"));
  m.def("format_gain", &format_gain, py::arg("relative_change"));
  m.def("format_value", &format_value, py::arg("value"));

  m.def(
      "combine_logits",
      [](const std::vector<std::pair<double, double>>& members) {
        std::vector<LogitPair> pairs;
        for (const auto& [neg, pos] : members) pairs.push_back({neg, pos});
        const auto avg = combine_logits(pairs);
        return py::make_tuple(avg[0], avg[1]);
      },
      py::arg("members"), "Mean of (negative, positive) logit pairs.");

  m.def(
      "decide",
      [](double negative, double positive, const std::string& tie) {
        DecisionRule rule;
        rule.tie = label_of(tie);
        return std::string(to_string(decide({negative, positive}, rule)));
      },
      py::arg("negative"), py::arg("positive"), py::arg("tie") = "positive");

  m.def(
      "early_stop",
      [](const std::vector<double>& losses, int patience) -> py::tuple {
        EarlyStopState state;
        for (int e = 1; e <= static_cast<int>(losses.size()); ++e) {
          const auto r = early_stop_step(state, e, losses[e - 1], patience);
          state = r.state;
          if (r.decision == StopDecision::kStop) return py::make_tuple(state.best_epoch, e);
        }
        return py::make_tuple(state.best_epoch, py::none());
      },
      py::arg("losses"), py::arg("patience"),
      "Replays validation losses; returns (best_epoch, stop_epoch or None).");

  m.def(
      "registry",
      [] {
        py::list out;
        for (const auto& spec : registry()) {
          py::dict d;
          d["name"] = spec.name;
          d["input_resolution"] = spec.input_resolution;
          d["last_conv"] = py::make_tuple(spec.last_conv.w, spec.last_conv.y, spec.last_conv.z);
          d["pretrained"] = spec.pretrained_source == PretrainedSource::kImagenet;
          d["trainable_params"] = spec.reference_trainable_params
                                      ? py::cast(*spec.reference_trainable_params)
                                      : py::none();
          out.append(d);
        }
        return out;
      },
      "Backbone registry as a list of dicts.");

  m.def(
      "head_param_count", [](std::int64_t z) { return head_param_count(z); }, py::arg("z"));

  m.def(
      "generate_synthetic",
      [](const std::filesystem::path& out_dir, int n_per_class, int test_per_class,
         int image_size, std::uint64_t seed, double difficulty) {
        SynthOptions o;
        o.n_per_class = n_per_class;
        o.test_per_class = test_per_class;
        o.image_size = image_size;
        o.seed = seed;
        o.difficulty = difficulty;
        return generate_synthetic(out_dir, o).size();
      },
      py::arg("out_dir"), py::arg("n_per_class") = 200, py::arg("test_per_class") = 0,
      py::arg("image_size") = 64, py::arg("seed") = 1, py::arg("difficulty") = 0.0,
      "Writes PNGs and manifest.tsv; returns the record count.");

  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::map<std::string, std::string>& overrides,
         const std::function<void(const std::string&)>& log) {
        RunConfig config = parse_config(config_text);
        for (const auto& [key, value] : overrides) apply_setting(config, key, value);
        ExperimentOutcome outcome;
        {
          py::gil_scoped_release release;
          std::function<void(const std::string&)> sink;
          if (log) {
            sink = [&log](const std::string& line) {
              py::gil_scoped_acquire acquire;
              log(line);
            };
          }
          outcome = run_experiment(config, sink);
        }
        py::dict d;
        d["exit_code"] = static_cast<int>(outcome.exit_code);
        d["trained"] = outcome.suite.trained;
        d["skipped"] = outcome.suite.skipped;
        d["failures"] = outcome.suite.failures.size();
        std::vector<std::string> reports;
        for (const auto& p : outcome.reports) reports.push_back(p.string());
        d["reports"] = reports;
        d["error"] = outcome.error_summary;
        d["run_root"] = config.run_root().string();
        return d;
      },
      py::arg("config_text") = "", py::arg("overrides") = std::map<std::string, std::string>{},
      py::arg("log") = nullptr,
      "Runs splits, training, evaluation and reports. Settings use config-file keys.");
}
