// Command-line front end: synthetic data, manifests, training, evaluation,
// ensembles, reports and the backbone registry.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

#include "cxrbench/config.hpp"
#include "cxrbench/dataset.hpp"
#include "cxrbench/error.hpp"
#include "cxrbench/experiment.hpp"
#include "cxrbench/model_zoo.hpp"
#include "cxrbench/reports.hpp"

namespace fs = std::filesystem;
using namespace cxrbench;

namespace {

struct GlobalFlags {
  std::string config_path;
  std::string run_id;
  std::string output_root;
  std::string models;
  std::string seeds;
  std::string manifest;
  std::string manifest_format;
  std::optional<double> val_fraction;
  std::optional<int> max_epochs;
  std::optional<int> patience;
  std::optional<int> batch_size;
  std::optional<double> lr_backbone;
  std::optional<double> lr_head;
  std::optional<int> workers;
  std::optional<int> stub_input_size;
  std::string tie_label;
};

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

// defaults < config file < CXRBENCH_ROOT < flags
RunConfig resolve_config(const GlobalFlags& f, bool prefer_snapshot) {
  RunConfig c;
  if (!f.config_path.empty()) c = load_config(f.config_path, c);
  if (const char* env = std::getenv("CXRBENCH_ROOT"); env && *env) c.output_root = env;
  if (!f.output_root.empty()) c.output_root = f.output_root;
  if (!f.run_id.empty()) c.run_id = f.run_id;

  if (prefer_snapshot) {
    const fs::path snapshot = c.run_root() / "config.snapshot";
    if (fs::exists(snapshot)) {
      RunConfig from_store = load_config(snapshot);
      from_store.output_root = c.output_root;
      from_store.workers = c.workers;
      return from_store;
    }
  }
  if (!f.models.empty()) apply_setting(c, "models", f.models);
  if (!f.seeds.empty()) apply_setting(c, "seeds", f.seeds);
  if (!f.manifest.empty()) c.manifest_path = f.manifest;
  if (!f.manifest_format.empty()) apply_setting(c, "manifest_format", f.manifest_format);
  if (!f.tie_label.empty()) apply_setting(c, "tie_label", f.tie_label);
  if (f.val_fraction) c.val_fraction = *f.val_fraction;
  if (f.max_epochs) c.train.max_epochs = *f.max_epochs;
  if (f.patience) c.train.patience = *f.patience;
  if (f.batch_size) c.train.batch_size = *f.batch_size;
  if (f.lr_backbone) c.train.lr_backbone = *f.lr_backbone;
  if (f.lr_head) c.train.lr_head = *f.lr_head;
  if (f.workers) c.workers = *f.workers;
  if (f.stub_input_size) c.train.stub_input_size = *f.stub_input_size;
  return c;
}

void print_written(const std::vector<fs::path>& paths) {
  for (const auto& p : paths) std::cout << p.string() << "\n";
}

int cmd_train(const RunConfig& config) {
  RunStore store = open_run(config);
  RunLock lock(store.root());
  const Manifest manifest = load_manifest(config.manifest_path, config.manifest_format);
  const auto plans = prepare_splits(config, manifest, store);
  const TrainConfig train = effective_train_config(config, manifest);
  for (const auto& w : validate(train)) log_line("warning: " + w);
  const SuiteResult r =
      train_suite(config.model_names, plans, train, manifest, store, {config.workers, log_line});
  std::cout << r.trained << " trained, " << r.skipped << " already complete, "
            << r.failures.size() << " failed\n";
  if (!r.failures.empty()) {
    for (const auto& f : r.failures) {
      std::cerr << "failed: " << f.model_name << " split " << f.split_index << " (" << f.kind
                << "): " << f.message << "\n";
    }
    return static_cast<int>(ExitCode::kTraining);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transfer-learning benchmark harness for binary image classification"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config_path, "Run config file (key = value lines)");
  app.add_option("--run-id", g.run_id, "Run identifier");
  app.add_option("--output-root", g.output_root, "Store root (env CXRBENCH_ROOT)");
  app.add_option("--models", g.models, "Comma-separated model names");
  app.add_option("--seeds", g.seeds, "Five comma-separated split seeds");
  app.add_option("--manifest", g.manifest, "Manifest path");
  app.add_option("--manifest-format", g.manifest_format, "tsv or covidx_txt");
  app.add_option("--val-fraction", g.val_fraction, "Validation fraction of the train subset");
  app.add_option("--max-epochs", g.max_epochs);
  app.add_option("--patience", g.patience);
  app.add_option("--batch-size", g.batch_size);
  app.add_option("--lr-backbone", g.lr_backbone);
  app.add_option("--lr-head", g.lr_head);
  app.add_option("--workers", g.workers, "Instances trained in parallel");
  app.add_option("--stub-input-size", g.stub_input_size);
  app.add_option("--tie-label", g.tie_label, "Label for exact logit ties (default positive)");

  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic two-class PNG dataset");
  std::string synth_out;
  SynthOptions so;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n-per-class", so.n_per_class, "Training images per class");
  synth->add_option("--test-per-class", so.test_per_class, "Test images per class");
  synth->add_option("--image-size", so.image_size);
  synth->add_option("--seed", so.seed);
  synth->add_option("--difficulty", so.difficulty, "0 = trivially separable, 1 = no signal");

  auto* make = app.add_subcommand("make-manifest", "Convert COVIDx text files to a TSV manifest");
  std::string covidx_train, covidx_test, image_root, manifest_out;
  make->add_option("--covidx-train", covidx_train, "COVIDx train list")->required();
  make->add_option("--covidx-test", covidx_test, "COVIDx test list");
  make->add_option("--image-root", image_root, "Directory holding the images");
  make->add_option("--out", manifest_out, "Output TSV path")->required();

  auto* train = app.add_subcommand("train", "Build splits and train every (model, split) instance");
  auto* evaluate = app.add_subcommand("evaluate", "Per-model and per-subset metric reports");
  auto* ensemble = app.add_subcommand("ensemble", "Heterogeneous, homogeneous and top-k reports");
  auto* report = app.add_subcommand("report", "Emit every report");
  auto* run = app.add_subcommand("run", "Splits, training, evaluation, ensembles and reports");
  auto* reg = app.add_subcommand("registry", "Print the backbone registry as TSV");
  for (auto* sub : {synth, make, train, evaluate, ensemble, report, run, reg}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage problems are validation errors; --help exits cleanly.
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : static_cast<int>(ExitCode::kValidation);
  }

  try {
    if (*reg) {
      std::cout << registry_tsv();
    } else if (*synth) {
      const Manifest m = generate_synthetic(synth_out, so);
      std::cout << "wrote " << m.size() << " images and " << (fs::path(synth_out) / "manifest.tsv")
                << "\n";
    } else if (*make) {
      LoadOptions opts;
      if (!image_root.empty()) opts.image_root = image_root;
      Manifest m = load_manifest(covidx_train, ManifestFormat::kCovidxTxt, opts);
      if (!covidx_test.empty()) {
        opts.covidx_subset = Subset::kTest;
        Manifest t = load_manifest(covidx_test, ManifestFormat::kCovidxTxt, opts);
        m.insert(m.end(), t.begin(), t.end());
      }
      validate_manifest(m);
      write_manifest_tsv(m, manifest_out);
      std::cout << "wrote " << m.size() << " entries to " << manifest_out << "\n";
    } else if (*train) {
      return cmd_train(resolve_config(g, false));
    } else if (*evaluate || *ensemble || *report) {
      const RunConfig config = resolve_config(g, true);
      RunStore store(config.run_root());
      const ReportGroup group = *evaluate   ? ReportGroup::kModels
                                : *ensemble ? ReportGroup::kEnsembles
                                            : ReportGroup::kAll;
      print_written(emit_reports(store, config, group));
    } else if (*run) {
      const RunConfig config = resolve_config(g, false);
      const ExperimentOutcome out = run_experiment(config, log_line);
      if (out.exit_code != ExitCode::kOk) {
        std::cerr << out.error_summary << std::endl;
        return static_cast<int>(out.exit_code);
      }
      print_written(out.reports);
    }
  } catch (const Error& e) {
    std::cerr << error_json(e) << std::endl;
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << std::endl;
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}
