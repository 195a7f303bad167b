#include "cxrbench/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cxrbench/error.hpp"
#include "cxrbench/image.hpp"
#include "cxrbench/random.hpp"
#include "cxrbench/store.hpp"
#include "text_util.hpp"

namespace cxrbench {

namespace fs = std::filesystem;

std::string_view to_string(Label label) {
  return label == Label::kPositive ? "positive" : "negative";
}

std::string_view to_string(Subset subset) { return subset == Subset::kTrain ? "train" : "test"; }

Label parse_label(std::string_view token) {
  const std::string lower = detail::to_lower(detail::trim(token));
  if (lower == "negative") return Label::kNegative;
  if (lower == "positive") return Label::kPositive;
  throw ValidationError("unknown label token '" + std::string(token) +
                        "' (expected negative or positive)");
}

Subset parse_subset(std::string_view token) {
  const std::string lower = detail::to_lower(detail::trim(token));
  if (lower == "train") return Subset::kTrain;
  if (lower == "test") return Subset::kTest;
  throw ValidationError("unknown subset token '" + std::string(token) +
                        "' (expected train or test)");
}

ManifestFormat parse_manifest_format(std::string_view token) {
  if (token == "tsv") return ManifestFormat::kTsv;
  if (token == "covidx_txt" || token == "covidx") return ManifestFormat::kCovidxTxt;
  throw ValidationError("unknown manifest format '" + std::string(token) +
                        "' (expected tsv or covidx_txt)");
}

namespace {

constexpr std::string_view kTsvHeader = "image_id\tpath\tlabel\tpatient_id\tsource\tsubset";

fs::path resolve_path(const fs::path& base, std::string_view raw) {
  fs::path p(raw);
  if (p.is_relative()) p = base / p;
  return p.lexically_normal();
}

// Label/subset errors are re-raised with file and line context.
template <typename F>
auto with_line(const fs::path& file, std::size_t line, F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(file.string() + ":" + std::to_string(line) + ": " + e.what());
  }
}

}  // namespace

Manifest load_manifest(const fs::path& path, ManifestFormat format, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path base = options.image_root.value_or(path.parent_path());

  Manifest out;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;

    if (format == ManifestFormat::kTsv) {
      if (!header_seen) {
        if (line != kTsvHeader) {
          throw ParseError(path.string(), lineno,
                           "expected header '" + std::string(kTsvHeader) + "'");
        }
        header_seen = true;
        continue;
      }
      const auto fields = detail::split(line, '\t');
      if (fields.size() != 6) {
        throw ParseError(path.string(), lineno,
                         "expected 6 tab-separated fields, got " + std::to_string(fields.size()));
      }
      if (fields[0].empty()) throw ParseError(path.string(), lineno, "empty image_id");
      if (fields[1].empty()) throw ParseError(path.string(), lineno, "empty path");
      ManifestEntry e;
      e.image_id = fields[0];
      e.path = resolve_path(base, fields[1]);
      e.label = with_line(path, lineno, [&] { return parse_label(fields[2]); });
      if (!fields[3].empty()) e.patient_id = fields[3];
      e.source = fields[4];
      e.subset = with_line(path, lineno, [&] { return parse_subset(fields[5]); });
      out.push_back(std::move(e));
    } else {
      std::istringstream tokens(line);
      std::vector<std::string> fields;
      for (std::string tok; tokens >> tok;) fields.push_back(tok);
      if (fields.size() != 4) {
        throw ParseError(path.string(), lineno,
                         "expected 'patient_id filename class source', got " +
                             std::to_string(fields.size()) + " fields");
      }
      ManifestEntry e;
      e.patient_id = fields[0];
      e.image_id = fields[1];
      e.path = resolve_path(base, fields[1]);
      e.label = with_line(path, lineno, [&] { return parse_label(fields[2]); });
      e.source = fields[3];
      e.subset = options.covidx_subset;
      out.push_back(std::move(e));
    }
  }
  if (format == ManifestFormat::kTsv && !header_seen) {
    throw ParseError(path.string(), lineno, "missing header line");
  }
  validate_manifest(out);
  return out;
}

void validate_manifest(const Manifest& manifest) {
  std::set<std::string_view> ids;
  for (const auto& e : manifest) {
    if (!ids.insert(e.image_id).second) {
      throw ValidationError("duplicate image_id '" + e.image_id + "'");
    }
  }
  const auto overlap = find_patient_overlap(manifest);
  if (!overlap.empty()) {
    std::string list;
    for (std::size_t i = 0; i < overlap.size() && i < 10; ++i) {
      list += (i ? ", " : "") + overlap[i];
    }
    throw ValidationError(std::to_string(overlap.size()) +
                          " patient id(s) appear in both train and test subsets: " + list);
  }
}

std::vector<std::string> find_patient_overlap(const Manifest& manifest) {
  std::set<std::string> train, test;
  for (const auto& e : manifest) {
    if (!e.patient_id) continue;
    (e.subset == Subset::kTrain ? train : test).insert(*e.patient_id);
  }
  std::vector<std::string> both;
  std::set_intersection(train.begin(), train.end(), test.begin(), test.end(),
                        std::back_inserter(both));
  return both;
}

std::string format_manifest_tsv(const Manifest& manifest, const fs::path& base_dir) {
  std::string out(kTsvHeader);
  out += '\n';
  for (const auto& e : manifest) {
    fs::path p = e.path;
    if (!base_dir.empty()) {
      const fs::path rel = e.path.lexically_relative(base_dir);
      if (!rel.empty() && *rel.begin() != "..") p = rel;
    }
    out += e.image_id + '\t' + p.generic_string() + '\t' + std::string(to_string(e.label)) +
           '\t' + e.patient_id.value_or("") + '\t' + e.source + '\t' +
           std::string(to_string(e.subset)) + '\n';
  }
  return out;
}

void write_manifest_tsv(const Manifest& manifest, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  atomic_commit(format_manifest_tsv(manifest, path.parent_path()), path);
}

DatasetCounts count_classes(const Manifest& manifest, Subset subset) {
  DatasetCounts c;
  for (const auto& e : manifest) {
    if (e.subset != subset) continue;
    (e.label == Label::kPositive ? c.c_positive : c.c_negative)++;
  }
  c.t = c.c_negative + c.c_positive;
  return c;
}

ClassWeights compute_class_weights(const DatasetCounts& counts) {
  if (counts.c_negative <= 0 || counts.c_positive <= 0) {
    throw DomainError("class weights need both class counts > 0 (negative=" +
                      std::to_string(counts.c_negative) +
                      ", positive=" + std::to_string(counts.c_positive) + ")");
  }
  if (counts.t != counts.c_negative + counts.c_positive) {
    throw DomainError("total " + std::to_string(counts.t) + " != sum of class counts");
  }
  const double half_total = static_cast<double>(counts.t) / 2.0;
  return {half_total / static_cast<double>(counts.c_negative),
          half_total / static_cast<double>(counts.c_positive)};
}

std::int64_t stratified_count(std::int64_t class_count, double val_fraction) {
  return static_cast<std::int64_t>(std::floor(static_cast<double>(class_count) * val_fraction + 0.5));
}

std::vector<SplitPlan> build_splits(const Manifest& manifest, double val_fraction,
                                    const std::vector<std::uint64_t>& seeds) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw DomainError("val_fraction must lie in (0, 1), got " + std::to_string(val_fraction));
  }
  if (seeds.size() != static_cast<std::size_t>(kNumSplits)) {
    throw ValidationError("exactly 5 seeds are required, got " + std::to_string(seeds.size()));
  }
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ValidationError("split seeds must be distinct");
  }

  std::array<std::vector<std::string>, 2> by_class;
  for (const auto& e : manifest) {
    if (e.subset == Subset::kTrain) by_class[static_cast<int>(e.label)].push_back(e.image_id);
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < 2) {
      throw DomainError("need at least 2 train entries of class " +
                        std::string(to_string(static_cast<Label>(c))) + ", found " +
                        std::to_string(by_class[c].size()));
    }
    // Canonical order so the plan depends on content, not row order.
    std::sort(by_class[c].begin(), by_class[c].end());
  }

  std::vector<SplitPlan> plans;
  for (int i = 0; i < kNumSplits; ++i) {
    SplitPlan plan;
    plan.seed = seeds[i];
    plan.split_index = i + 1;
    for (int c = 0; c < 2; ++c) {
      std::vector<std::string> ids = by_class[c];
      const auto n = static_cast<std::int64_t>(ids.size());
      const std::int64_t k = stratified_count(n, val_fraction);
      const std::string cls(to_string(static_cast<Label>(c)));
      if (k < 1) plan.warnings.push_back("class " + cls + " has no validation items");
      if (k >= n) plan.warnings.push_back("class " + cls + " has no training items");
      Rng rng(mix_seed(seeds[i], static_cast<std::uint64_t>(c)));
      rng.shuffle(std::span<std::string>(ids));
      plan.val_ids.insert(plan.val_ids.end(), ids.begin(), ids.begin() + k);
      plan.train_ids.insert(plan.train_ids.end(), ids.begin() + k, ids.end());
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::string format_split_tsv(const SplitPlan& plan) {
  std::string out = "image_id\trole\n";
  for (const auto& id : plan.train_ids) out += id + "\ttrain\n";
  for (const auto& id : plan.val_ids) out += id + "\tvalidation\n";
  return out;
}

SplitPlan parse_split_tsv(std::string_view text, std::uint64_t seed, int split_index) {
  SplitPlan plan;
  plan.seed = seed;
  plan.split_index = split_index;
  std::size_t lineno = 0;
  for (const auto& line : detail::split(text, '\n')) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    const auto f = detail::split(line, '\t');
    if (f.size() != 2) throw ParseError("split plan", lineno, "expected 2 fields");
    if (f[1] == "train") {
      plan.train_ids.push_back(f[0]);
    } else if (f[1] == "validation") {
      plan.val_ids.push_back(f[0]);
    } else {
      throw ParseError("split plan", lineno, "unknown role '" + f[1] + "'");
    }
  }
  return plan;
}

namespace {

// Class 0: dim, finely striped background. Class 1: brighter with a bright
// blob. `difficulty` shrinks the class offset and blob amplitude and adds
// brightness jitter and noise until at 1 the classes are indistinguishable.
Raster synth_image(int size, Label label, double difficulty, Rng& rng) {
  const double separation = 1.0 - difficulty;
  const double jitter = rng.uniform(-0.06, 0.06) + difficulty * rng.uniform(-0.2, 0.2);
  const double noise_sd = 0.04 + 0.10 * difficulty;
  const bool positive = label == Label::kPositive;
  const double level = 0.38 + (positive ? 0.20 * separation : 0.0) + jitter;
  const double blob_amp = positive ? 0.25 * separation : 0.0;
  const double cx = rng.uniform(0.3, 0.7) * size;
  const double cy = rng.uniform(0.3, 0.7) * size;
  const double radius = rng.uniform(0.12, 0.22) * size;
  const double stripe_period = rng.uniform(3.0, 6.0);
  const double stripe_amp = 0.04;

  Raster r;
  r.width = r.height = size;
  r.channels = 1;
  r.pixels.resize(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x - cx, dy = y - cy;
      double v = level + stripe_amp * std::sin(2.0 * M_PI * y / stripe_period);
      v += blob_amp * std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
      v += noise_sd * rng.normal();
      v = std::clamp(v, 0.0, 1.0);
      r.pixels[static_cast<std::size_t>(y) * size + x] =
          static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return r;
}

}  // namespace

Manifest generate_synthetic(const fs::path& out_dir, const SynthOptions& o) {
  if (o.n_per_class < 2) {
    throw DomainError("n_per_class must be >= 2, got " + std::to_string(o.n_per_class));
  }
  if (o.test_per_class < 0) throw DomainError("test_per_class must be >= 0");
  if (o.image_size < 4) throw DomainError("image_size must be >= 4");
  if (!(o.difficulty >= 0.0 && o.difficulty <= 1.0)) {
    throw DomainError("difficulty must lie in [0, 1]");
  }
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  Manifest manifest;
  for (Subset subset : {Subset::kTrain, Subset::kTest}) {
    const int count = subset == Subset::kTrain ? o.n_per_class : o.test_per_class;
    for (Label label : {Label::kNegative, Label::kPositive}) {
      for (int i = 0; i < count; ++i) {
        const std::string stem = std::string(to_string(subset)) + "_" +
                                 (label == Label::kPositive ? "pos" : "neg") + "_" +
                                 detail::zero_pad(i, 5);
        Rng rng(mix_seed(mix_seed(o.seed, hash_label(stem)), 0x5eed));
        const Raster img = synth_image(o.image_size, label, o.difficulty, rng);
        ManifestEntry e;
        e.image_id = "syn_" + stem;
        e.path = out_dir / "images" / (stem + ".png");
        e.label = label;
        e.patient_id = "synpat_" + stem;
        e.source = "synthetic";
        e.subset = subset;
        try {
          atomic_commit(encode_png(img), e.path);
        } catch (const std::filesystem::filesystem_error& err) {
          throw IoError(std::string("cannot write synthetic image: ") + err.what());
        }
        manifest.push_back(std::move(e));
      }
    }
  }
  write_manifest_tsv(manifest, out_dir / "manifest.tsv");
  return manifest;
}

}  // namespace cxrbench
