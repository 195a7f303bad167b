#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <set>

#include "cxrbench/error.hpp"
#include "cxrbench/model_zoo.hpp"
#include "cxrbench/network.hpp"
#include "support.hpp"

using namespace cxrbench;

namespace {

Raster constant_gray(int w, int h, std::uint8_t v) {
  Raster r;
  r.width = w;
  r.height = h;
  r.channels = 1;
  r.pixels.assign(static_cast<std::size_t>(w) * h, v);
  return r;
}

Raster gradient_gray(int w, int h) {
  Raster r = constant_gray(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) r.pixels[y * w + x] = static_cast<std::uint8_t>((x * 7 + y * 3) % 256);
  }
  return r;
}

Planar random_input(int x, std::mt19937_64& gen) {
  Planar p;
  p.channels = 3;
  p.height = x;
  p.width = x;
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  p.data.resize(static_cast<std::size_t>(3) * x * x);
  for (auto& v : p.data) v = d(gen);
  return p;
}

Classifier stub_model(std::uint64_t seed, int x = 8, double dropout = 0.2) {
  HeadSpec head;
  head.dropout_rate = dropout;
  return build_classifier(resolve_model("stub", x), head, Init::kRandom, seed);
}

}  // namespace

TEST_CASE("registry lookups") {
  const auto& d = registry_lookup("DenseNet169");
  CHECK(d.input_resolution == 224);
  CHECK(d.last_conv == ConvShape{7, 7, 1664});
  const auto& e = registry_lookup("EfficientNetB3");
  CHECK(e.input_resolution == 300);
  CHECK(e.last_conv == ConvShape{10, 10, 1536});
  try {
    registry_lookup("resnet9000");
    FAIL("expected a lookup error");
  } catch (const LookupError& err) {
    CHECK(std::string(err.what()).find("DenseNet121") != std::string::npos);
    CHECK(err.exit_code() == ExitCode::kValidation);
  }
}

TEST_CASE("registry matches the reference backbone table") {
  const auto table = testing::load_fixture("reference_backbones.tsv");
  REQUIRE(table.rows.size() == 21);
  std::set<std::string> names;
  for (const auto& spec : registry()) names.insert(spec.name);
  CHECK(names.size() == registry().size());
  CHECK(registry().size() == 22);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& spec = registry_lookup(table.str(i, "name"));
    const std::string res = std::to_string(spec.input_resolution);
    CHECK(res + "x" + res == table.str(i, "input_resolution"));
    CHECK(std::to_string(spec.last_conv.w) + "x" + std::to_string(spec.last_conv.y) + "x" +
              std::to_string(spec.last_conv.z) ==
          table.str(i, "last_conv_shape"));
    CHECK(spec.reference_trainable_params == std::stoll(table.str(i, "trainable_params")));
    CHECK(spec.pretrained_source == PretrainedSource::kImagenet);
  }
  const std::string tsv = registry_tsv();
  CHECK(tsv.find("DenseNet169\t224x224\t7x7x1664\t12911234\n") != std::string::npos);
}

TEST_CASE("head parameter counts") {
  CHECK(head_param_count(1664) == 426'754);
  CHECK(head_param_count(512) == 131'842);
  CHECK(head_param_count(1024) == 262'914);
  CHECK(head_param_count(1) == 1'026);
  CHECK(head_param_count(2048) == 525'058);
  CHECK_THROWS_AS(head_param_count(0), DomainError);
}

TEST_CASE("head count formula equals an element count of a built head") {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> z_dist(1, 4096);
  for (int trial = 0; trial < 200; ++trial) {
    const int z = z_dist(gen);
    ClassifierHead head(z, HeadSpec{});
    std::int64_t elements = 0;
    for (const auto& p : head.parameters()) elements += static_cast<std::int64_t>(p.value.size());
    CHECK(elements == head_param_count(z));
  }
}

TEST_CASE("head spec validation") {
  HeadSpec h;
  CHECK_NOTHROW(validate(h));
  h.dropout_rate = 1.0;
  CHECK_THROWS_AS(validate(h), ValidationError);
  h = {};
  h.output_classes = 3;
  CHECK_THROWS_AS(validate(h), ValidationError);
}

TEST_CASE("stub variants and input size override") {
  CHECK(is_stub("stub"));
  CHECK(is_stub("stub-b"));
  CHECK_FALSE(is_stub("stub-"));
  CHECK_FALSE(is_stub("stubby"));
  const auto s = resolve_model("stub-b", 24);
  CHECK(s.name == "stub-b");
  CHECK(s.input_resolution == 24);
  CHECK(s.last_conv == ConvShape{12, 12, 16});
  CHECK_THROWS_AS(resolve_model("stub", 7), ValidationError);
  CHECK_THROWS_AS(resolve_model("stubby"), LookupError);
}

TEST_CASE("preprocess replicates gray and resizes") {
  SUBCASE("DenseNet169: channels identical before the per-channel standardization") {
    const auto& spec = registry_lookup("DenseNet169");
    const Planar t = preprocess(gradient_gray(100, 80), spec);
    CHECK(t.channels == 3);
    CHECK(t.height == 224);
    CHECK(t.width == 224);
    const float mean[3] = {0.485f, 0.456f, 0.406f};
    const float sd[3] = {0.229f, 0.224f, 0.225f};
    for (int y = 0; y < 224; y += 13) {
      for (int x = 0; x < 224; x += 11) {
        const float r = t.at(0, y, x) * sd[0] + mean[0];
        CHECK(std::abs(t.at(1, y, x) * sd[1] + mean[1] - r) < 1e-5f);
        CHECK(std::abs(t.at(2, y, x) * sd[2] + mean[2] - r) < 1e-5f);
      }
    }
  }
  SUBCASE("InceptionV3: identical channels in [-1, 1]") {
    const Planar t = preprocess(gradient_gray(100, 80), registry_lookup("InceptionV3"));
    CHECK(t.height == 299);
    const std::size_t plane = 299 * 299;
    for (std::size_t i = 0; i < plane; i += 97) {
      CHECK(t.data[i] == t.data[plane + i]);
      CHECK(t.data[i] == t.data[2 * plane + i]);
      CHECK(t.data[i] >= -1.0f);
      CHECK(t.data[i] <= 1.0f);
    }
  }
  SUBCASE("EfficientNetB2 spatial dims") {
    const Planar t = preprocess(gradient_gray(31, 517), registry_lookup("EfficientNetB2"));
    CHECK(t.height == 260);
    CHECK(t.width == 260);
  }
  SUBCASE("VGG16 caffe convention subtracts BGR means") {
    const Planar t = preprocess(constant_gray(10, 10, 128), registry_lookup("VGG16"));
    CHECK(t.at(0, 3, 3) == doctest::Approx(128.0 - 103.939));
    CHECK(t.at(2, 3, 3) == doctest::Approx(128.0 - 123.68));
  }
  SUBCASE("constant image under stub preprocessing") {
    const Planar t = preprocess(constant_gray(50, 40, 200), resolve_model("stub"));
    CHECK(t.height == 32);
    for (float v : t.data) CHECK(v == doctest::Approx(200.0 / 255.0).epsilon(1e-6));
  }
  SUBCASE("empty raster") {
    CHECK_THROWS_AS(preprocess(Raster{}, resolve_model("stub")), DataError);
  }
}

TEST_CASE("conform is a no-op on correctly sized tensors") {
  std::mt19937_64 gen(3);
  const auto spec = resolve_model("stub", 16);
  const Planar t = random_input(16, gen);
  const Planar u = conform(t, spec);
  CHECK(u.data == t.data);
  const Planar p = preprocess(gradient_gray(16, 16), spec);
  CHECK(conform(p, spec).data == p.data);
}

TEST_CASE("build_classifier availability") {
  CHECK_THROWS_AS(build_classifier(registry_lookup("DenseNet169"), {}, Init::kPretrained, 1),
                  InitializationError);
  CHECK_THROWS_AS(build_classifier(registry_lookup("VGG16"), {}, Init::kRandom, 1),
                  InitializationError);
  CHECK_THROWS_AS(build_classifier(resolve_model("stub"), {}, Init::kPretrained, 1),
                  InitializationError);
  CHECK_NOTHROW(build_classifier(resolve_model("stub"), {}, Init::kRandom, 1));
}

TEST_CASE("stub forward shape and parameter groups") {
  std::mt19937_64 gen(11);
  auto model = build_classifier(resolve_model("stub"), {}, Init::kRandom, 42);
  std::vector<Planar> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(random_input(32, gen));
  const auto out = model.forward_batch(batch);
  REQUIRE(out.size() == 4);
  for (const auto& pair : out) {
    CHECK(std::isfinite(pair[0]));
    CHECK(std::isfinite(pair[1]));
  }
  CHECK(out[0] == model.forward(batch[0]));

  const std::int64_t backbone = 3 * 8 * 9 + 8 + 8 * 16 * 9 + 16;
  CHECK(model.parameter_count(ParamGroup::kBackbone) == backbone);
  CHECK(model.parameter_count(ParamGroup::kHead) == head_param_count(16));
  std::set<std::string> names;
  std::int64_t total = 0;
  for (const Parameter* p : model.parameters()) {
    names.insert(p->name);
    total += static_cast<std::int64_t>(p->value.size());
    CHECK((p->group == ParamGroup::kBackbone) == p->name.starts_with("backbone."));
    CHECK((p->group == ParamGroup::kHead) == p->name.starts_with("head."));
  }
  CHECK(names.size() == model.parameters().size());
  CHECK(total == backbone + head_param_count(16));

  Planar wrong = random_input(16, gen);
  CHECK_THROWS_AS(model.forward(wrong), DataError);
}

TEST_CASE("initialization depends only on the seed") {
  std::mt19937_64 gen(5);
  const Planar probe = random_input(8, gen);
  const auto a = stub_model(1).forward(probe);
  const auto b = stub_model(1).forward(probe);
  const auto c = stub_model(2).forward(probe);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("serialize round trip is bit exact") {
  std::mt19937_64 gen(9);
  auto a = stub_model(3);
  auto b = stub_model(4);
  const auto blob = a.serialize();
  b.deserialize(blob);
  CHECK(b.serialize() == blob);
  for (int i = 0; i < 5; ++i) {
    const Planar p = random_input(8, gen);
    CHECK(a.forward(p) == b.forward(p));
  }
  auto truncated = blob;
  truncated.pop_back();
  CHECK_THROWS_AS(b.deserialize(truncated), DataError);
  HeadSpec narrow;
  narrow.dense_units = 64;
  auto other = build_classifier(resolve_model("stub", 8), narrow, Init::kRandom, 1);
  CHECK_THROWS_AS(other.deserialize(blob), DataError);
}

TEST_CASE("weighted cross-entropy") {
  const std::vector<LogitPair> logits = {{0.3, -1.2}, {2.0, 0.5}, {-0.4, 0.9}, {1.0, 1.0}};
  const std::vector<int> labels = {0, 1, 1, 0};
  auto ce = [](const LogitPair& z, int y) {
    const double m = std::max(z[0], z[1]);
    const double lse = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m));
    return lse - z[y];
  };
  double plain = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) plain += ce(logits[i], labels[i]);
  plain /= static_cast<double>(logits.size());

  const auto unit = weighted_cross_entropy(logits, labels, 1.0, 1.0);
  CHECK(std::abs(unit.mean - plain) < 1e-6);

  const auto doubled = weighted_cross_entropy(logits, labels, 1.0, 2.0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double factor = labels[i] == 1 ? 2.0 : 1.0;
    CHECK(doubled.per_sample[i] == factor * unit.per_sample[i]);
  }
  CHECK_THROWS_AS(weighted_cross_entropy({}, {}, 1.0, 1.0), DomainError);
}

TEST_CASE("backward pass agrees with finite differences") {
  std::mt19937_64 gen(21);
  auto model = stub_model(8, 8, 0.0);
  const Planar input = random_input(8, gen);
  Rng rng(1);
  model.zero_grad();
  const double loss = model.accumulate(input, 1, 1.7, 1.0, rng);
  auto loss_at = [&]() {
    const auto z = model.forward(input);
    return weighted_cross_entropy(std::vector<LogitPair>{z}, std::vector<int>{1}, 1.0, 1.7).mean;
  };
  CHECK(std::abs(loss - loss_at()) < 1e-5);

  int checked = 0, agreed = 0;
  for (Parameter* p : model.parameters()) {
    std::uniform_int_distribution<std::size_t> pick(0, p->value.size() - 1);
    for (int k = 0; k < 6; ++k) {
      const std::size_t i = pick(gen);
      const float saved = p->value[i];
      const float h = 1e-2f;
      p->value[i] = saved + h;
      const double up = loss_at();
      p->value[i] = saved - h;
      const double down = loss_at();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      ++checked;
      if (std::abs(numeric - p->grad[i]) <= 2e-3 + 2e-2 * std::abs(numeric)) ++agreed;
    }
  }
  // A few probes may straddle a ReLU or max-pool switch.
  CHECK(agreed >= checked * 9 / 10);
}

TEST_CASE("two-tier learning rates") {
  std::mt19937_64 gen(13);
  const Planar input = random_input(8, gen);
  auto run = [&](double lr_backbone, double lr_head) {
    auto model = stub_model(6, 8, 0.0);
    auto before = model.parameters();
    std::vector<std::vector<float>> snapshot;
    for (const Parameter* p : before) snapshot.push_back(p->value);
    Rng rng(2);
    model.zero_grad();
    model.accumulate(input, 0, 1.0, 1.0, rng);
    Adam adam({lr_backbone, lr_head});
    adam.step(model.parameters());
    bool backbone_moved = false, head_moved = false;
    const auto after = model.parameters();
    for (std::size_t i = 0; i < after.size(); ++i) {
      const bool moved = after[i]->value != snapshot[i];
      (after[i]->group == ParamGroup::kBackbone ? backbone_moved : head_moved) |= moved;
    }
    return std::pair{backbone_moved, head_moved};
  };
  CHECK(run(1e-5, 0.0) == std::pair{true, false});
  CHECK(run(0.0, 1e-3) == std::pair{false, true});
  CHECK(run(1e-5, 1e-3) == std::pair{true, true});
}

TEST_CASE("Adam first step moves each parameter by about lr") {
  Parameter p{"head.x", ParamGroup::kHead, {1.0f, -2.0f}, {0.5f, -3.0f}};
  Parameter* ptr = &p;
  Adam adam({1e-5, 1e-3});
  adam.step(std::span<Parameter* const>(&ptr, 1));
  CHECK(p.value[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-6));
  CHECK(adam.steps() == 1);
}

TEST_CASE("dropout is only active during training") {
  std::mt19937_64 gen(17);
  auto model = stub_model(10, 8, 0.5);
  const Planar input = random_input(8, gen);
  CHECK(model.forward(input) == model.forward(input));
  Rng r1(1), r2(2);
  model.zero_grad();
  const double a = model.accumulate(input, 0, 1.0, 1.0, r1);
  model.zero_grad();
  const double b = model.accumulate(input, 0, 1.0, 1.0, r2);
  CHECK(a != b);
}
