#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "cxrbench/dataset.hpp"
#include "cxrbench/network.hpp"

namespace cxrbench {

enum class EvalSubset { kTrain, kValidation, kTest };

std::string_view to_string(EvalSubset subset);
EvalSubset parse_eval_subset(std::string_view token);

// One image's two pre-softmax outputs from one trained instance.
struct LogitRecord {
  std::string run_id;
  std::string model;
  int split_index = 1;
  EvalSubset subset = EvalSubset::kTest;
  std::string image_id;
  double logit_negative = 0.0;
  double logit_positive = 0.0;
  Label true_label = Label::kNegative;

  LogitPair logits() const { return {logit_negative, logit_positive}; }
};

// CSV with header run_id,model,split_index,subset,image_id,logit_negative,
// logit_positive,true_label; logits written with 17 significant digits so
// they parse back bit-exact.
std::string format_logits_csv(std::span<const LogitRecord> records);
std::vector<LogitRecord> parse_logits_csv(std::string_view text);

// Immutable-after-load collection of logit records. Within a
// (model, split, subset) slice records are ordered by image id.
class LogitCache {
 public:
  // Non-finite logits or a duplicate (model, split, image, subset) raise DataError.
  void add(const LogitRecord& record);
  void add(std::span<const LogitRecord> records);

  bool has(std::string_view model, int split_index, EvalSubset subset) const;
  // DataError naming the missing (model, instance, subset).
  const std::vector<LogitRecord>& slice(std::string_view model, int split_index,
                                        EvalSubset subset) const;
  std::size_t size() const { return count_; }

 private:
  using Key = std::tuple<std::string, int, EvalSubset>;
  std::map<Key, std::vector<LogitRecord>, std::less<>> slices_;
  std::size_t count_ = 0;
};

// Argmax decision; an exact tie goes to `tie`.
struct DecisionRule {
  Label tie = Label::kPositive;
};

std::string describe(const DecisionRule& rule);

// Elementwise mean of the members' logit pairs. Empty input raises DomainError.
LogitPair combine_logits(std::span<const LogitPair> members);
// Same, checking that every record refers to the same image (DataError otherwise).
LogitPair combine_logits(std::span<const LogitRecord* const> members);

Label decide(const LogitPair& logits, const DecisionRule& rule = {});

}  // namespace cxrbench
