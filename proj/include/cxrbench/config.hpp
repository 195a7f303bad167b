#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cxrbench/dataset.hpp"
#include "cxrbench/logits.hpp"
#include "cxrbench/trainer.hpp"

namespace cxrbench {

// Everything that determines a run. Serialized as flat `key = value` lines
// with `#` comments:
//
//   run_id, manifest, manifest_format, models, seeds, val_fraction,
//   max_epochs, patience, lr_backbone, lr_head, batch_size, dense_units,
//   dropout_rate, stub_input_size, tie_label, output_root, workers
struct RunConfig {
  std::string run_id = "run";
  std::filesystem::path manifest_path;
  ManifestFormat manifest_format = ManifestFormat::kTsv;
  std::vector<std::string> model_names = {"stub"};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double val_fraction = 0.2;
  TrainConfig train;
  std::filesystem::path output_root = "runs";
  int workers = 1;
  DecisionRule rule;

  std::filesystem::path run_root() const { return output_root / run_id; }
};

// Unknown keys and malformed values raise ValidationError (ParseError for
// lines without '=').
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

// Canonical snapshot of the reproducibility-relevant keys (excludes
// output_root and workers).
std::string format_config_snapshot(const RunConfig& config);

void validate(const RunConfig& config);

std::vector<std::string> split_list(std::string_view text, char sep = ',');

}  // namespace cxrbench
