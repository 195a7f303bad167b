#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cxrbench {

enum class Label { kNegative = 0, kPositive = 1 };
enum class Subset { kTrain, kTest };

std::string_view to_string(Label label);
std::string_view to_string(Subset subset);
// Case-insensitive; anything other than negative/positive is a ValidationError.
Label parse_label(std::string_view token);
Subset parse_subset(std::string_view token);

struct ManifestEntry {
  std::string image_id;
  std::filesystem::path path;
  Label label = Label::kNegative;
  std::optional<std::string> patient_id;
  std::string source;
  Subset subset = Subset::kTrain;

  bool operator==(const ManifestEntry&) const = default;
};

using Manifest = std::vector<ManifestEntry>;

enum class ManifestFormat { kTsv, kCovidxTxt };

ManifestFormat parse_manifest_format(std::string_view token);

struct LoadOptions {
  // Subset assigned to every record of a COVIDx text file (the format has no
  // subset column). Ignored for TSV.
  Subset covidx_subset = Subset::kTrain;
  // Directory that relative image paths are resolved against. Defaults to
  // the manifest's own directory.
  std::optional<std::filesystem::path> image_root;
};

// Parses a manifest. Malformed lines raise ParseError carrying the line
// number; duplicate ids, unknown labels and train/test patient overlap raise
// ValidationError.
Manifest load_manifest(const std::filesystem::path& path, ManifestFormat format,
                       const LoadOptions& options = {});

// TSV serialization; image paths are written relative to `base_dir` when
// they live beneath it.
std::string format_manifest_tsv(const Manifest& manifest,
                                const std::filesystem::path& base_dir);
void write_manifest_tsv(const Manifest& manifest, const std::filesystem::path& path);

// Checks id uniqueness and train/test patient disjointness.
void validate_manifest(const Manifest& manifest);
// Patient ids present in both subsets, sorted.
std::vector<std::string> find_patient_overlap(const Manifest& manifest);

struct DatasetCounts {
  std::int64_t c_negative = 0;
  std::int64_t c_positive = 0;
  std::int64_t t = 0;
};

DatasetCounts count_classes(const Manifest& manifest, Subset subset = Subset::kTrain);

struct ClassWeights {
  double w_negative = 1.0;
  double w_positive = 1.0;

  double of(Label label) const {
    return label == Label::kPositive ? w_positive : w_negative;
  }
};

// w_i = t / (2 c_i). Zero class counts or an inconsistent total raise DomainError.
ClassWeights compute_class_weights(const DatasetCounts& counts);

struct SplitPlan {
  std::uint64_t seed = 0;
  int split_index = 1;  // 1..5
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  // Non-fatal issues, e.g. a class left with no validation items.
  std::vector<std::string> warnings;

  bool operator==(const SplitPlan&) const = default;
};

inline constexpr int kNumSplits = 5;

// Per-class validation size: round-half-up of c * val_fraction.
std::int64_t stratified_count(std::int64_t class_count, double val_fraction);

// One stratified plan per seed over the train subset of `manifest`.
std::vector<SplitPlan> build_splits(const Manifest& manifest, double val_fraction,
                                    const std::vector<std::uint64_t>& seeds);

std::string format_split_tsv(const SplitPlan& plan);
SplitPlan parse_split_tsv(std::string_view text, std::uint64_t seed, int split_index);

struct SynthOptions {
  int n_per_class = 200;    // training images per class
  int test_per_class = 0;   // held-out test images per class, in addition
  int image_size = 64;
  std::uint64_t seed = 1;
  double difficulty = 0.0;  // 0 = separable by mean intensity, 1 = no signal
};

// Writes 8-bit grayscale PNGs under out_dir/images and out_dir/manifest.tsv.
// Output is a pure function of the options.
Manifest generate_synthetic(const std::filesystem::path& out_dir, const SynthOptions& options);

}  // namespace cxrbench
