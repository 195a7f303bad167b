#include "cxrbench/model_zoo.hpp"

#include <algorithm>

#include "cxrbench/error.hpp"

namespace cxrbench {

namespace {

using IC = InputConvention;

BackboneSpec imagenet(std::string name, int res, int w, int y, int z, std::int64_t params,
                      IC convention, std::string reference) {
  return {std::move(name), res,        {w, y, z},           PretrainedSource::kImagenet,
          params,          convention, std::move(reference)};
}

const std::vector<BackboneSpec>& registry_storage() {
  static const std::vector<BackboneSpec> specs = {
      imagenet("DenseNet121", 224, 7, 7, 1024, 7'216'770, IC::kTorch, "Huang2017"),
      imagenet("DenseNet169", 224, 7, 7, 1664, 12'911'234, IC::kTorch, "Huang2017"),
      imagenet("DenseNet201", 224, 7, 7, 1920, 18'585'218, IC::kTorch, "Huang2017"),
      imagenet("EfficientNetB0", 224, 7, 7, 1280, 4'335'998, IC::kRaw, "Tan2019"),
      imagenet("EfficientNetB1", 240, 8, 8, 1280, 6'841'634, IC::kRaw, "Tan2019"),
      imagenet("EfficientNetB2", 260, 9, 9, 1408, 8'062'212, IC::kRaw, "Tan2019"),
      imagenet("EfficientNetB3", 300, 10, 10, 1536, 11'090'218, IC::kRaw, "Tan2019"),
      imagenet("InceptionResNetV2", 299, 8, 8, 1536, 54'670'178, IC::kTf, "Szegedy2017"),
      imagenet("InceptionV3", 299, 8, 8, 2048, 22'293'410, IC::kTf, "Szegedy2016"),
      imagenet("MobileNet", 224, 7, 7, 1024, 3'469'890, IC::kTf, "Howard2017"),
      imagenet("MobileNetV2", 224, 7, 7, 1280, 2'552'322, IC::kTf, "Sandler2018"),
      imagenet("NASNetMobile", 224, 7, 7, 1056, 4'504'084, IC::kTf, "Zoph2018"),
      imagenet("ResNet101", 224, 7, 7, 2048, 43'077'890, IC::kCaffe, "He2016"),
      imagenet("ResNet101V2", 224, 7, 7, 2048, 43'053'954, IC::kTf, "He2016ResNetV2"),
      imagenet("ResNet152", 224, 7, 7, 2048, 58'744'578, IC::kCaffe, "He2016"),
      imagenet("ResNet152V2", 224, 7, 7, 2048, 58'712'962, IC::kTf, "He2016ResNetV2"),
      imagenet("ResNet50", 224, 7, 7, 2048, 24'059'650, IC::kCaffe, "He2016"),
      imagenet("ResNet50V2", 224, 7, 7, 2048, 24'044'418, IC::kTf, "He2016ResNetV2"),
      imagenet("VGG16", 224, 7, 7, 512, 14'846'530, IC::kCaffe, "Simonyan2015"),
      imagenet("VGG19", 224, 7, 7, 512, 20'156'226, IC::kCaffe, "Simonyan2015"),
      imagenet("Xception", 299, 10, 10, 2048, 21'332'010, IC::kTf, "Chollet2017"),
      BackboneSpec{std::string(kStubName), 32, {16, 16, 16}, PretrainedSource::kNone,
                   std::nullopt, IC::kUnitRange, "built-in two-layer convolutional trunk"},
  };
  return specs;
}

}  // namespace

void validate(const HeadSpec& head) {
  if (head.dense_units <= 0) throw ValidationError("dense_units must be > 0");
  if (!(head.dropout_rate >= 0.0 && head.dropout_rate < 1.0)) {
    throw ValidationError("dropout_rate must lie in [0, 1)");
  }
  if (head.output_classes != 2) throw ValidationError("the head is binary: output_classes = 2");
}

std::span<const BackboneSpec> registry() { return registry_storage(); }

const BackboneSpec& registry_lookup(std::string_view name) {
  for (const auto& spec : registry_storage()) {
    if (spec.name == name) return spec;
  }
  std::string names;
  for (const auto& spec : registry_storage()) {
    names += (names.empty() ? "" : ", ") + spec.name;
  }
  throw LookupError("unknown backbone '" + std::string(name) + "'; valid names: " + names);
}

bool is_stub(std::string_view model_name) {
  return model_name == kStubName ||
         (model_name.size() > kStubName.size() + 1 && model_name.starts_with(kStubName) &&
          model_name[kStubName.size()] == '-');
}

BackboneSpec resolve_model(std::string_view model_name, int stub_input_size) {
  if (!is_stub(model_name)) return registry_lookup(model_name);
  if (stub_input_size < 4 || stub_input_size % 2 != 0) {
    throw ValidationError("stub_input_size must be even and >= 4, got " +
                          std::to_string(stub_input_size));
  }
  BackboneSpec spec = registry_lookup(kStubName);
  spec.name = std::string(model_name);
  spec.input_resolution = stub_input_size;
  spec.last_conv = {stub_input_size / 2, stub_input_size / 2, spec.last_conv.z};
  return spec;
}

std::int64_t head_param_count(std::int64_t z, const HeadSpec& head) {
  if (z <= 0) throw DomainError("channel count must be > 0");
  const std::int64_t u = head.dense_units;
  const std::int64_t k = head.output_classes;
  return z * u + u + u * k + k;
}

namespace {

void normalize(Planar& t, InputConvention convention) {
  const std::size_t plane = static_cast<std::size_t>(t.height) * t.width;
  auto channel = [&](int c) { return std::span<float>(t.data).subspan(c * plane, plane); };
  switch (convention) {
    case IC::kUnitRange:
      for (float& v : t.data) v /= 255.0f;
      break;
    case IC::kRaw:
      break;
    case IC::kTf:
      for (float& v : t.data) v = v / 127.5f - 1.0f;
      break;
    case IC::kTorch: {
      constexpr float mean[3] = {0.485f, 0.456f, 0.406f};
      constexpr float stdev[3] = {0.229f, 0.224f, 0.225f};
      for (int c = 0; c < 3; ++c) {
        for (float& v : channel(c)) v = (v / 255.0f - mean[c]) / stdev[c];
      }
      break;
    }
    case IC::kCaffe: {
      // RGB -> BGR, then subtract the per-channel ImageNet means (BGR order).
      std::vector<float> r(channel(0).begin(), channel(0).end());
      std::copy(channel(2).begin(), channel(2).end(), channel(0).begin());
      std::copy(r.begin(), r.end(), channel(2).begin());
      constexpr float mean[3] = {103.939f, 116.779f, 123.68f};
      for (int c = 0; c < 3; ++c) {
        for (float& v : channel(c)) v -= mean[c];
      }
      break;
    }
  }
}

}  // namespace

Planar preprocess(const Raster& image, const BackboneSpec& spec) {
  if (image.empty() || image.width <= 0 || image.height <= 0) {
    throw DataError("cannot preprocess an empty image");
  }
  Planar src;
  src.channels = 3;
  src.height = image.height;
  src.width = image.width;
  src.data.resize(static_cast<std::size_t>(3) * image.height * image.width);
  for (int c = 0; c < 3; ++c) {
    const int from = image.channels == 1 ? 0 : c;
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) src.at(c, y, x) = image.at(x, y, from);
    }
  }
  Planar out = resize_bilinear(src, spec.input_resolution, spec.input_resolution);
  normalize(out, spec.convention);
  return out;
}

Planar conform(const Planar& tensor, const BackboneSpec& spec) {
  if (tensor.channels != 3) throw DataError("model inputs have 3 channels");
  return resize_bilinear(tensor, spec.input_resolution, spec.input_resolution);
}

std::string registry_tsv() {
  std::string out = "name\tinput_resolution\tlast_conv_shape\treference_trainable_params\n";
  for (const auto& s : registry_storage()) {
    const std::string res = std::to_string(s.input_resolution);
    out += s.name + '\t' + res + 'x' + res + '\t' + std::to_string(s.last_conv.w) + 'x' +
           std::to_string(s.last_conv.y) + 'x' + std::to_string(s.last_conv.z) + '\t' +
           (s.reference_trainable_params ? std::to_string(*s.reference_trainable_params) : "") +
           '\n';
  }
  return out;
}

}  // namespace cxrbench
