#include "cxrbench/logits.hpp"

#include <algorithm>
#include <cmath>

#include "cxrbench/error.hpp"
#include "text_util.hpp"

namespace cxrbench {

std::string_view to_string(EvalSubset subset) {
  switch (subset) {
    case EvalSubset::kTrain: return "train";
    case EvalSubset::kValidation: return "validation";
    case EvalSubset::kTest: return "test";
  }
  return "?";
}

EvalSubset parse_eval_subset(std::string_view token) {
  if (token == "train") return EvalSubset::kTrain;
  if (token == "validation") return EvalSubset::kValidation;
  if (token == "test") return EvalSubset::kTest;
  throw ValidationError("unknown subset '" + std::string(token) + "'");
}

namespace {
constexpr std::string_view kHeader =
    "run_id,model,split_index,subset,image_id,logit_negative,logit_positive,true_label";
}

std::string format_logits_csv(std::span<const LogitRecord> records) {
  std::string out(kHeader);
  out += '\n';
  for (const auto& r : records) {
    out += r.run_id + ',' + r.model + ',' + std::to_string(r.split_index) + ',' +
           std::string(to_string(r.subset)) + ',' + r.image_id + ',' +
           detail::format_double(r.logit_negative) + ',' + detail::format_double(r.logit_positive) +
           ',' + std::string(to_string(r.true_label)) + '\n';
  }
  return out;
}

std::vector<LogitRecord> parse_logits_csv(std::string_view text) {
  const auto lines = detail::split(text, '\n');
  if (lines.empty() || lines[0] != kHeader) throw ParseError("logits.csv", 1, "bad header");
  std::vector<LogitRecord> out;
  out.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = detail::split(lines[i], ',');
    if (f.size() != 8) throw ParseError("logits.csv", i + 1, "expected 8 fields");
    try {
      out.push_back({f[0], f[1], detail::parse_int<int>(f[2], "split_index"),
                     parse_eval_subset(f[3]), f[4], detail::parse_double(f[5], "logit_negative"),
                     detail::parse_double(f[6], "logit_positive"), parse_label(f[7])});
    } catch (const ValidationError& e) {
      throw ParseError("logits.csv", i + 1, e.what());
    }
  }
  return out;
}

void LogitCache::add(const LogitRecord& record) {
  if (!std::isfinite(record.logit_negative) || !std::isfinite(record.logit_positive)) {
    throw DataError("non-finite logits for image '" + record.image_id + "' (" + record.model +
                    ", instance " + std::to_string(record.split_index) + ")");
  }
  auto& slice = slices_[Key{record.model, record.split_index, record.subset}];
  const auto pos = std::lower_bound(
      slice.begin(), slice.end(), record.image_id,
      [](const LogitRecord& r, const std::string& id) { return r.image_id < id; });
  if (pos != slice.end() && pos->image_id == record.image_id) {
    throw DataError("duplicate logit record for image '" + record.image_id + "' (" +
                    record.model + ", instance " + std::to_string(record.split_index) + ", " +
                    std::string(to_string(record.subset)) + ")");
  }
  slice.insert(pos, record);
  ++count_;
}

void LogitCache::add(std::span<const LogitRecord> records) {
  for (const auto& r : records) add(r);
}

bool LogitCache::has(std::string_view model, int split_index, EvalSubset subset) const {
  const auto it = slices_.find(Key{std::string(model), split_index, subset});
  return it != slices_.end() && !it->second.empty();
}

const std::vector<LogitRecord>& LogitCache::slice(std::string_view model, int split_index,
                                                  EvalSubset subset) const {
  const auto it = slices_.find(Key{std::string(model), split_index, subset});
  if (it == slices_.end() || it->second.empty()) {
    throw DataError("logit cache has no " + std::string(to_string(subset)) + " records for (" +
                    std::string(model) + ", instance " + std::to_string(split_index) + ")");
  }
  return it->second;
}

std::string describe(const DecisionRule& rule) {
  return "argmax of averaged pre-softmax logits; exact ties -> " + std::string(to_string(rule.tie));
}

LogitPair combine_logits(std::span<const LogitPair> members) {
  if (members.empty()) throw DomainError("cannot combine an empty member list");
  LogitPair sum{0.0, 0.0};
  for (const auto& m : members) {
    sum[0] += m[0];
    sum[1] += m[1];
  }
  const double n = static_cast<double>(members.size());
  return {sum[0] / n, sum[1] / n};
}

LogitPair combine_logits(std::span<const LogitRecord* const> members) {
  if (members.empty()) throw DomainError("cannot combine an empty member list");
  std::vector<LogitPair> pairs;
  pairs.reserve(members.size());
  for (const LogitRecord* r : members) {
    if (r->image_id != members.front()->image_id) {
      throw DataError("ensemble members disagree on image id: '" + members.front()->image_id +
                      "' vs '" + r->image_id + "'");
    }
    pairs.push_back(r->logits());
  }
  return combine_logits(pairs);
}

Label decide(const LogitPair& logits, const DecisionRule& rule) {
  if (logits[1] > logits[0]) return Label::kPositive;
  if (logits[0] > logits[1]) return Label::kNegative;
  return rule.tie;
}

}  // namespace cxrbench
