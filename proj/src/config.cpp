#include "cxrbench/config.hpp"

#include <set>

#include "cxrbench/error.hpp"
#include "cxrbench/store.hpp"
#include "text_util.hpp"

namespace cxrbench {

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  for (const auto& part : detail::split(text, sep)) {
    const auto t = detail::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

void apply_setting(RunConfig& c, std::string_view key, std::string_view raw) {
  const std::string value(detail::trim(raw));
  using detail::parse_double;
  using detail::parse_int;
  if (key == "run_id") {
    c.run_id = value;
  } else if (key == "manifest") {
    c.manifest_path = value;
  } else if (key == "manifest_format") {
    c.manifest_format = parse_manifest_format(value);
  } else if (key == "models") {
    c.model_names = split_list(value);
  } else if (key == "seeds") {
    c.seeds.clear();
    for (const auto& s : split_list(value)) c.seeds.push_back(parse_int<std::uint64_t>(s, key));
  } else if (key == "val_fraction") {
    c.val_fraction = parse_double(value, key);
  } else if (key == "max_epochs") {
    c.train.max_epochs = parse_int<int>(value, key);
  } else if (key == "patience") {
    c.train.patience = parse_int<int>(value, key);
  } else if (key == "lr_backbone") {
    c.train.lr_backbone = parse_double(value, key);
  } else if (key == "lr_head") {
    c.train.lr_head = parse_double(value, key);
  } else if (key == "batch_size") {
    c.train.batch_size = parse_int<int>(value, key);
  } else if (key == "dense_units") {
    c.train.head.dense_units = parse_int<int>(value, key);
  } else if (key == "dropout_rate") {
    c.train.head.dropout_rate = parse_double(value, key);
  } else if (key == "stub_input_size") {
    c.train.stub_input_size = parse_int<int>(value, key);
  } else if (key == "tie_label") {
    c.rule.tie = parse_label(value);
  } else if (key == "output_root") {
    c.output_root = value;
  } else if (key == "workers") {
    c.workers = parse_int<int>(value, key);
  } else {
    throw ValidationError("unknown config key '" + std::string(key) + "'");
  }
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t lineno = 0;
  for (const auto& raw : detail::split(text, '\n')) {
    ++lineno;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("config", lineno, "expected key = value");
    try {
      apply_setting(base, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  return parse_config(read_file(path), std::move(base));
}

std::string format_config_snapshot(const RunConfig& c) {
  auto join = [](const auto& items) {
    std::string out;
    for (const auto& item : items) {
      if (!out.empty()) out += ',';
      if constexpr (std::is_same_v<std::decay_t<decltype(item)>, std::string>) {
        out += item;
      } else {
        out += std::to_string(item);
      }
    }
    return out;
  };
  const std::string manifest =
      c.manifest_path.empty()
          ? ""
          : std::filesystem::absolute(c.manifest_path).lexically_normal().string();
  return "run_id = " + c.run_id + "\nmanifest = " + manifest + "\nmanifest_format = " +
         (c.manifest_format == ManifestFormat::kTsv ? "tsv" : "covidx_txt") +
         "\nmodels = " + join(c.model_names) + "\nseeds = " + join(c.seeds) +
         "\nval_fraction = " + detail::format_double(c.val_fraction) +
         "\nmax_epochs = " + std::to_string(c.train.max_epochs) +
         "\npatience = " + std::to_string(c.train.patience) +
         "\nlr_backbone = " + detail::format_double(c.train.lr_backbone) +
         "\nlr_head = " + detail::format_double(c.train.lr_head) +
         "\nbatch_size = " + std::to_string(c.train.batch_size) +
         "\ndense_units = " + std::to_string(c.train.head.dense_units) +
         "\ndropout_rate = " + detail::format_double(c.train.head.dropout_rate) +
         "\nstub_input_size = " + std::to_string(c.train.stub_input_size) +
         "\ntie_label = " + std::string(to_string(c.rule.tie)) + "\n";
}

void validate(const RunConfig& c) {
  if (!is_filesystem_safe(c.run_id)) {
    throw ValidationError("run_id '" + c.run_id + "' is not filesystem-safe");
  }
  if (c.seeds.size() != static_cast<std::size_t>(kNumSplits)) {
    throw ValidationError("exactly 5 seeds are required, got " + std::to_string(c.seeds.size()));
  }
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
    throw ValidationError("split seeds must be distinct");
  }
  if (c.model_names.empty()) throw ValidationError("no models configured");
  std::set<std::string> unique;
  for (const auto& m : c.model_names) {
    if (!unique.insert(m).second) throw ValidationError("model '" + m + "' listed twice");
    resolve_model(m, c.train.stub_input_size);
  }
  if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) {
    throw DomainError("val_fraction must lie in (0, 1)");
  }
  if (c.workers < 1) throw ValidationError("workers must be >= 1");
  validate(c.train);
}

}  // namespace cxrbench
