#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cxrbench/image.hpp"
#include "cxrbench/model_zoo.hpp"
#include "cxrbench/random.hpp"

namespace cxrbench {

enum class ParamGroup { kBackbone, kHead };

struct Parameter {
  std::string name;
  ParamGroup group = ParamGroup::kHead;
  std::vector<float> value;
  std::vector<float> grad;
};

using LogitPair = std::array<double, 2>;  // {negative, positive}

// Dense classification head: GAP output (z) -> dense(u) ReLU -> dropout -> dense(k).
class ClassifierHead {
 public:
  ClassifierHead(int in_channels, const HeadSpec& spec);
  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }
  const HeadSpec& spec() const { return spec_; }
  int in_channels() const { return in_channels_; }

 private:
  friend class Classifier;
  int in_channels_;
  HeadSpec spec_;
  std::vector<Parameter> params_;  // dense1.w, dense1.b, dense2.w, dense2.b
};

enum class Init { kPretrained, kRandom };

// Backbone + head. Only the stub trunk (two 3x3 conv layers, 2x2 max-pool
// between them) has an implementation in this build.
class Classifier {
 public:
  Classifier(const BackboneSpec& spec, const HeadSpec& head, std::uint64_t init_seed);

  const BackboneSpec& spec() const { return spec_; }
  int input_size() const { return spec_.input_resolution; }

  // Backbone parameters first, then head parameters.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::int64_t parameter_count(ParamGroup group) const;

  // Inference (no dropout). `input` is (3, x, x).
  LogitPair forward(const Planar& input) const;
  std::vector<LogitPair> forward_batch(std::span<const Planar> batch) const;

  // Training forward/backward of one sample. Adds d(scale * loss)/d(params)
  // to the gradients; returns the unscaled weighted loss.
  double accumulate(const Planar& input, int label, double sample_weight, double scale,
                    Rng& dropout_rng);

  void zero_grad();

  // Lossless snapshot of every parameter value.
  std::vector<std::uint8_t> serialize() const;
  void deserialize(std::span<const std::uint8_t> bytes);

 private:
  struct Workspace;
  void trunk_forward(const Planar& input, Workspace& ws) const;

  BackboneSpec spec_;
  int c1_ = 8;   // conv1 output channels
  int c2_ = 16;  // conv2 output channels (= last_conv.z)
  std::vector<Parameter> backbone_;  // conv1.w, conv1.b, conv2.w, conv2.b
  ClassifierHead head_;
};

// Raises InitializationError when no implementation or pretrained weights
// exist for the spec (every ImageNet backbone in this build; stub+pretrained).
Classifier build_classifier(const BackboneSpec& spec, const HeadSpec& head, Init init,
                            std::uint64_t init_seed);

// Adam with one learning rate per parameter group.
class Adam {
 public:
  struct Options {
    double lr_backbone = 1e-5;
    double lr_head = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
  };

  explicit Adam(Options options) : options_(options) {}
  void step(std::span<Parameter* const> params);
  std::int64_t steps() const { return t_; }

 private:
  Options options_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Mean class-weighted cross-entropy over the softmax of each logit pair.
struct WeightedLoss {
  double mean = 0.0;
  std::vector<double> per_sample;  // w_y * CE
};
WeightedLoss weighted_cross_entropy(std::span<const LogitPair> logits, std::span<const int> labels,
                                    double w_negative, double w_positive);

}  // namespace cxrbench
