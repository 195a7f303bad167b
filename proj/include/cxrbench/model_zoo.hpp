#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cxrbench/image.hpp"

namespace cxrbench {

enum class PretrainedSource { kImagenet, kNone };

// Input value conventions of the backbone families.
enum class InputConvention {
  kCaffe,      // BGR, ImageNet mean subtracted, 0..255 scale
  kTorch,      // [0,1], ImageNet mean/std standardized
  kTf,         // [-1,1]
  kRaw,        // 0..255 passthrough (model rescales internally)
  kUnitRange,  // [0,1]
};

struct ConvShape {
  int w = 0;
  int y = 0;
  int z = 0;  // channels
  bool operator==(const ConvShape&) const = default;
};

struct BackboneSpec {
  std::string name;
  int input_resolution = 0;
  ConvShape last_conv;
  PretrainedSource pretrained_source = PretrainedSource::kNone;
  std::optional<std::int64_t> reference_trainable_params;
  InputConvention convention = InputConvention::kUnitRange;
  std::string reference;
};

struct HeadSpec {
  int dense_units = 256;
  double dropout_rate = 0.20;
  int output_classes = 2;
};

void validate(const HeadSpec& head);

inline constexpr std::string_view kStubName = "stub";

// All registered backbones in registry order (21 ImageNet backbones, then stub).
std::span<const BackboneSpec> registry();

// Exact-name lookup; unknown names raise LookupError listing valid names.
const BackboneSpec& registry_lookup(std::string_view name);

// Resolves a model name used in a run. Besides registry names this accepts
// stub variants "stub-<tag>", which share the stub architecture but draw an
// independent initialization stream. `stub_input_size` overrides the stub
// resolution (must be even and >= 4).
BackboneSpec resolve_model(std::string_view model_name, int stub_input_size = 32);
bool is_stub(std::string_view model_name);

// Dense-head trainable parameters on top of z channels: z*u + u + u*k + k.
std::int64_t head_param_count(std::int64_t z, const HeadSpec& head = {});

// Resize to (x, x), replicate gray to 3 channels and apply the family's value
// convention. Returns a (3, x, x) planar tensor.
Planar preprocess(const Raster& image, const BackboneSpec& spec);
// Resize only; for inputs that are already normalized.
Planar conform(const Planar& tensor, const BackboneSpec& spec);

// Registry dump as TSV: name, resolution, conv shape, reference params.
std::string registry_tsv();

}  // namespace cxrbench
