#include "cxrbench/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cxrbench/error.hpp"

namespace cxrbench {

namespace {

Parameter make_param(std::string name, ParamGroup group, std::size_t n) {
  return {std::move(name), group, std::vector<float>(n, 0.0f), std::vector<float>(n, 0.0f)};
}

void glorot_uniform(std::vector<float>& w, double fan_in, double fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (float& v : w) v = static_cast<float>(rng.uniform(-limit, limit));
}

// 3x3, stride 1, zero padding 1. Layouts: in (cin,H,W), w (cout,cin,3,3), out (cout,H,W).
void conv3x3_forward(const float* in, int cin, int H, int W, const float* w, const float* b,
                     int cout, float* out) {
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int co = 0; co < cout; ++co) {
    float* o = out + co * plane;
    std::fill(o, o + plane, b[co]);
    for (int ci = 0; ci < cin; ++ci) {
      const float* src = in + ci * plane;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          const float wv = w[((co * cin + ci) * 3 + ky) * 3 + kx];
          for (int y = y0; y < y1; ++y) {
            float* orow = o + static_cast<std::size_t>(y) * W;
            const float* irow = src + static_cast<std::size_t>(y + dy) * W + dx;
            for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

// `dout` is the gradient w.r.t. the pre-activation output. `din` may be null.
void conv3x3_backward(const float* in, int cin, int H, int W, const float* w, int cout,
                      const float* dout, float* dw, float* db, float* din) {
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int co = 0; co < cout; ++co) {
    const float* g = dout + co * plane;
    float bias_grad = 0.0f;
    for (std::size_t i = 0; i < plane; ++i) bias_grad += g[i];
    db[co] += bias_grad;
    for (int ci = 0; ci < cin; ++ci) {
      const float* src = in + ci * plane;
      float* dsrc = din ? din + ci * plane : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          const std::size_t widx = ((co * cin + ci) * 3 + ky) * 3 + kx;
          const float wv = w[widx];
          float acc = 0.0f;
          for (int y = y0; y < y1; ++y) {
            const float* grow = g + static_cast<std::size_t>(y) * W;
            const float* irow = src + static_cast<std::size_t>(y + dy) * W + dx;
            for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x];
            if (dsrc) {
              float* drow = dsrc + static_cast<std::size_t>(y + dy) * W + dx;
              for (int x = x0; x < x1; ++x) drow[x] += wv * grow[x];
            }
          }
          dw[widx] += acc;
        }
      }
    }
  }
}

constexpr char kMagic[8] = {'C', 'X', 'R', 'W', '0', '0', '0', '1'};

template <typename T>
void put(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(std::span<const std::uint8_t>& in) {
  if (in.size() < sizeof(T)) throw DataError("truncated weights blob");
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in = in.subspan(sizeof(T));
  return v;
}

}  // namespace

ClassifierHead::ClassifierHead(int in_channels, const HeadSpec& spec)
    : in_channels_(in_channels), spec_(spec) {
  if (in_channels <= 0) throw DomainError("head input channels must be > 0");
  validate(spec);
  const auto u = static_cast<std::size_t>(spec.dense_units);
  const auto k = static_cast<std::size_t>(spec.output_classes);
  params_.push_back(make_param("head.dense1.w", ParamGroup::kHead, u * in_channels));
  params_.push_back(make_param("head.dense1.b", ParamGroup::kHead, u));
  params_.push_back(make_param("head.dense2.w", ParamGroup::kHead, k * u));
  params_.push_back(make_param("head.dense2.b", ParamGroup::kHead, k));
}

struct Classifier::Workspace {
  std::vector<float> a1;       // conv1 post-ReLU (c1, x, x)
  std::vector<float> p1;       // pooled (c1, h, h)
  std::vector<int> pool_arg;   // flat index into a1 per pooled cell
  std::vector<float> a2;       // conv2 post-ReLU (c2, h, h)
  std::vector<float> pooled;   // GAP (c2)
  std::vector<float> h1;       // dense1 post-ReLU (u)
  std::vector<float> dropped;  // after dropout (u)
  std::vector<float> mask;     // dropout multipliers (u)
};

Classifier::Classifier(const BackboneSpec& spec, const HeadSpec& head, std::uint64_t init_seed)
    : spec_(spec), c2_(spec.last_conv.z), head_(spec.last_conv.z, head) {
  const int x = spec.input_resolution;
  if (x < 4 || x % 2 != 0) throw InitializationError("stub input size must be even and >= 4");
  if (spec.last_conv.w != x / 2 || spec.last_conv.y != x / 2) {
    throw InitializationError("stub last_conv spatial dims must be input/2");
  }
  backbone_.push_back(make_param("backbone.conv1.w", ParamGroup::kBackbone, c1_ * 3 * 9));
  backbone_.push_back(make_param("backbone.conv1.b", ParamGroup::kBackbone, c1_));
  backbone_.push_back(make_param("backbone.conv2.w", ParamGroup::kBackbone, c2_ * c1_ * 9));
  backbone_.push_back(make_param("backbone.conv2.b", ParamGroup::kBackbone, c2_));

  Rng rng(init_seed);
  glorot_uniform(backbone_[0].value, 3 * 9, c1_ * 9, rng);
  glorot_uniform(backbone_[2].value, c1_ * 9, c2_ * 9, rng);
  const int u = head.dense_units;
  glorot_uniform(head_.params_[0].value, c2_, u, rng);
  glorot_uniform(head_.params_[2].value, u, head.output_classes, rng);
}

std::vector<Parameter*> Classifier::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : backbone_) out.push_back(&p);
  for (auto& p : head_.params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> Classifier::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : backbone_) out.push_back(&p);
  for (const auto& p : head_.params_) out.push_back(&p);
  return out;
}

std::int64_t Classifier::parameter_count(ParamGroup group) const {
  std::int64_t n = 0;
  for (const Parameter* p : parameters()) {
    if (p->group == group) n += static_cast<std::int64_t>(p->value.size());
  }
  return n;
}

void Classifier::trunk_forward(const Planar& input, Workspace& ws) const {
  const int x = spec_.input_resolution;
  const int h = x / 2;
  if (input.channels != 3 || input.height != x || input.width != x) {
    throw DataError("model input must be (3, " + std::to_string(x) + ", " + std::to_string(x) +
                    ")");
  }
  ws.a1.resize(static_cast<std::size_t>(c1_) * x * x);
  conv3x3_forward(input.data.data(), 3, x, x, backbone_[0].value.data(),
                  backbone_[1].value.data(), c1_, ws.a1.data());
  for (float& v : ws.a1) v = std::max(v, 0.0f);

  ws.p1.resize(static_cast<std::size_t>(c1_) * h * h);
  ws.pool_arg.resize(ws.p1.size());
  for (int c = 0; c < c1_; ++c) {
    for (int py = 0; py < h; ++py) {
      for (int px = 0; px < h; ++px) {
        int best = (c * x + 2 * py) * x + 2 * px;
        for (int oy = 0; oy < 2; ++oy) {
          for (int ox = 0; ox < 2; ++ox) {
            const int idx = (c * x + 2 * py + oy) * x + 2 * px + ox;
            if (ws.a1[idx] > ws.a1[best]) best = idx;
          }
        }
        const std::size_t out = (static_cast<std::size_t>(c) * h + py) * h + px;
        ws.p1[out] = ws.a1[best];
        ws.pool_arg[out] = best;
      }
    }
  }

  ws.a2.resize(static_cast<std::size_t>(c2_) * h * h);
  conv3x3_forward(ws.p1.data(), c1_, h, h, backbone_[2].value.data(), backbone_[3].value.data(),
                  c2_, ws.a2.data());
  for (float& v : ws.a2) v = std::max(v, 0.0f);

  const std::size_t plane = static_cast<std::size_t>(h) * h;
  ws.pooled.assign(c2_, 0.0f);
  for (int c = 0; c < c2_; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += ws.a2[c * plane + i];
    ws.pooled[c] = static_cast<float>(sum / static_cast<double>(plane));
  }

  const int u = head_.spec_.dense_units;
  const auto& w1 = head_.params_[0].value;
  const auto& b1 = head_.params_[1].value;
  ws.h1.resize(u);
  for (int j = 0; j < u; ++j) {
    float acc = b1[j];
    const float* row = w1.data() + static_cast<std::size_t>(j) * c2_;
    for (int c = 0; c < c2_; ++c) acc += row[c] * ws.pooled[c];
    ws.h1[j] = std::max(acc, 0.0f);
  }
}

namespace {

LogitPair dense2(const std::vector<float>& w2, const std::vector<float>& b2,
                 const std::vector<float>& in) {
  const std::size_t u = in.size();
  LogitPair out{};
  for (int k = 0; k < 2; ++k) {
    float acc = b2[k];
    const float* row = w2.data() + k * u;
    for (std::size_t j = 0; j < u; ++j) acc += row[j] * in[j];
    out[k] = acc;
  }
  return out;
}

}  // namespace

LogitPair Classifier::forward(const Planar& input) const {
  Workspace ws;
  trunk_forward(input, ws);
  return dense2(head_.params_[2].value, head_.params_[3].value, ws.h1);
}

std::vector<LogitPair> Classifier::forward_batch(std::span<const Planar> batch) const {
  std::vector<LogitPair> out;
  out.reserve(batch.size());
  for (const auto& input : batch) out.push_back(forward(input));
  return out;
}

double Classifier::accumulate(const Planar& input, int label, double sample_weight,
                              double scale, Rng& dropout_rng) {
  Workspace ws;
  trunk_forward(input, ws);
  const int u = head_.spec_.dense_units;
  const double rate = head_.spec_.dropout_rate;
  const auto keep_scale = static_cast<float>(1.0 / (1.0 - rate));
  ws.mask.resize(u);
  ws.dropped.resize(u);
  for (int j = 0; j < u; ++j) {
    ws.mask[j] = (rate > 0.0 && dropout_rng.uniform() < rate) ? 0.0f : keep_scale;
    ws.dropped[j] = ws.h1[j] * ws.mask[j];
  }
  const LogitPair z = dense2(head_.params_[2].value, head_.params_[3].value, ws.dropped);

  // Softmax cross-entropy, weighted by the class weight of the true label.
  const double zmax = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - zmax), e1 = std::exp(z[1] - zmax);
  const double lse = zmax + std::log(e0 + e1);
  const double loss = sample_weight * (lse - z[label]);
  const double p[2] = {e0 / (e0 + e1), e1 / (e0 + e1)};
  float dz[2];
  for (int k = 0; k < 2; ++k) {
    dz[k] = static_cast<float>(scale * sample_weight * (p[k] - (k == label ? 1.0 : 0.0)));
  }

  // dense2
  auto& w2 = head_.params_[2];
  auto& b2 = head_.params_[3];
  std::vector<float> dh(u, 0.0f);
  for (int k = 0; k < 2; ++k) {
    b2.grad[k] += dz[k];
    float* gw = w2.grad.data() + static_cast<std::size_t>(k) * u;
    const float* wrow = w2.value.data() + static_cast<std::size_t>(k) * u;
    for (int j = 0; j < u; ++j) {
      gw[j] += dz[k] * ws.dropped[j];
      dh[j] += dz[k] * wrow[j];
    }
  }
  // dropout + ReLU
  for (int j = 0; j < u; ++j) dh[j] = ws.h1[j] > 0.0f ? dh[j] * ws.mask[j] : 0.0f;

  // dense1
  auto& w1 = head_.params_[0];
  auto& b1 = head_.params_[1];
  std::vector<float> dpooled(c2_, 0.0f);
  for (int j = 0; j < u; ++j) {
    if (dh[j] == 0.0f) continue;
    b1.grad[j] += dh[j];
    float* gw = w1.grad.data() + static_cast<std::size_t>(j) * c2_;
    const float* wrow = w1.value.data() + static_cast<std::size_t>(j) * c2_;
    for (int c = 0; c < c2_; ++c) {
      gw[c] += dh[j] * ws.pooled[c];
      dpooled[c] += dh[j] * wrow[c];
    }
  }

  // GAP + ReLU into conv2
  const int x = spec_.input_resolution;
  const int h = x / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * h;
  std::vector<float> da2(ws.a2.size());
  for (int c = 0; c < c2_; ++c) {
    const float g = dpooled[c] / static_cast<float>(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      da2[c * plane + i] = ws.a2[c * plane + i] > 0.0f ? g : 0.0f;
    }
  }
  std::vector<float> dp1(ws.p1.size(), 0.0f);
  conv3x3_backward(ws.p1.data(), c1_, h, h, backbone_[2].value.data(), c2_, da2.data(),
                   backbone_[2].grad.data(), backbone_[3].grad.data(), dp1.data());

  // max-pool routing + ReLU into conv1
  std::vector<float> da1(ws.a1.size(), 0.0f);
  for (std::size_t i = 0; i < dp1.size(); ++i) {
    const int idx = ws.pool_arg[i];
    if (ws.a1[idx] > 0.0f) da1[idx] += dp1[i];
  }
  conv3x3_backward(input.data.data(), 3, x, x, backbone_[0].value.data(), c1_, da1.data(),
                   backbone_[0].grad.data(), backbone_[1].grad.data(), nullptr);
  return loss;
}

void Classifier::zero_grad() {
  for (Parameter* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
}

std::vector<std::uint8_t> Classifier::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  const auto params = parameters();
  put(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put(out, static_cast<std::uint32_t>(p->name.size()));
    out.insert(out.end(), p->name.begin(), p->name.end());
    put(out, static_cast<std::uint64_t>(p->value.size()));
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p->value.data());
    out.insert(out.end(), bytes, bytes + p->value.size() * sizeof(float));
  }
  return out;
}

void Classifier::deserialize(std::span<const std::uint8_t> in) {
  if (in.size() < sizeof kMagic || std::memcmp(in.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError("not a weights blob");
  }
  in = in.subspan(sizeof kMagic);
  auto params = parameters();
  if (take<std::uint32_t>(in) != params.size()) throw DataError("weights blob layout mismatch");
  for (Parameter* p : params) {
    const auto name_len = take<std::uint32_t>(in);
    if (in.size() < name_len) throw DataError("truncated weights blob");
    const std::string name(reinterpret_cast<const char*>(in.data()), name_len);
    in = in.subspan(name_len);
    const auto n = take<std::uint64_t>(in);
    if (name != p->name || n != p->value.size()) {
      throw DataError("weights blob has '" + name + "' where '" + p->name + "' was expected");
    }
    if (in.size() < n * sizeof(float)) throw DataError("truncated weights blob");
    std::memcpy(p->value.data(), in.data(), n * sizeof(float));
    in = in.subspan(n * sizeof(float));
  }
  if (!in.empty()) throw DataError("trailing bytes in weights blob");
}

Classifier build_classifier(const BackboneSpec& spec, const HeadSpec& head, Init init,
                            std::uint64_t init_seed) {
  if (spec.pretrained_source == PretrainedSource::kNone && init == Init::kPretrained) {
    throw InitializationError("backbone '" + spec.name + "' has no pretrained weights");
  }
  if (spec.pretrained_source == PretrainedSource::kImagenet) {
    throw InitializationError("backbone '" + spec.name +
                              "' is registered but has no implementation or ImageNet weights in "
                              "this build; use the stub backbone");
  }
  return Classifier(spec, head, init_seed);
}

void Adam::step(std::span<Parameter* const> params) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ValidationError("optimizer parameter set changed");
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    const double lr = p.group == ParamGroup::kHead ? options_.lr_head : options_.lr_backbone;
    const double lr_t = lr * std::sqrt(c2) / c1;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g;
      v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g * g;
      if (lr_t != 0.0) {
        p.value[j] -= static_cast<float>(lr_t * m[j] / (std::sqrt(v[j]) + options_.epsilon));
      }
    }
  }
}

WeightedLoss weighted_cross_entropy(std::span<const LogitPair> logits, std::span<const int> labels,
                                    double w_negative, double w_positive) {
  if (logits.size() != labels.size()) throw DomainError("logits/labels size mismatch");
  if (logits.empty()) throw DomainError("empty batch");
  WeightedLoss out;
  out.per_sample.reserve(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& z = logits[i];
    const double zmax = std::max(z[0], z[1]);
    const double lse = zmax + std::log(std::exp(z[0] - zmax) + std::exp(z[1] - zmax));
    const double w = labels[i] == 1 ? w_positive : w_negative;
    const double l = w * (lse - z[labels[i]]);
    out.per_sample.push_back(l);
    total += l;
  }
  out.mean = total / static_cast<double>(logits.size());
  return out;
}

}  // namespace cxrbench
