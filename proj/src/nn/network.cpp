#include "fieldev/nn/network.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "fieldev/binary_io.hpp"
#include "fieldev/errors.hpp"
#include "fieldev/nn/ops.hpp"

namespace fieldev::nn {

namespace {

constexpr std::size_t kChannels = 4;
constexpr std::size_t kVector = 3;

Tensor relu_dense(const Tensor& x, const Tensor& w, const Tensor& b) { return relu(dense(x, w, b)); }

}  // namespace

NetworkSpec NetworkSpec::small() { return NetworkSpec{}; }

NetworkSpec NetworkSpec::large() {
  NetworkSpec s;
  s.variant = NetworkVariant::Large;
  s.trunk_filters = {16, 32};
  s.residual_blocks = 3;
  return s;
}

const char* to_string(NetworkVariant v) noexcept {
  return v == NetworkVariant::Small ? "small" : "large";
}

void NetworkSpec::validate() const {
  if (trunk_filters.empty()) throw InvalidArgument("network: trunk needs at least one convolution");
  for (int f : trunk_filters)
    if (f <= 0) throw InvalidArgument("network: trunk filter counts must be positive");
  if (kernel <= 0 || arm_kernel <= 0) throw InvalidArgument("network: kernel sizes must be positive");
  if (kernel % 2 == 0 && residual_blocks > 0)
    throw InvalidArgument("network: same padding in residual blocks needs an odd kernel");
  if (residual_blocks < 0) throw InvalidArgument("network: residual_blocks must be >= 0");
  if (variant == NetworkVariant::Small && residual_blocks != 0)
    throw InvalidArgument("network: the small variant has no residual blocks");
  if (variant == NetworkVariant::Large && residual_blocks == 0)
    throw InvalidArgument("network: the large variant needs residual blocks");
  if (arm_filters <= 0) throw InvalidArgument("network: arm_filters must be positive");
  for (int d : arm_dense)
    if (d <= 0) throw InvalidArgument("network: arm dense sizes must be positive");
  for (int d : vector_dense)
    if (d <= 0) throw InvalidArgument("network: vector dense sizes must be positive");
  if (!(head_init_scale > 0.0) || !std::isfinite(head_init_scale))
    throw InvalidArgument("network: head_init_scale must be positive");
}

std::string NetworkSpec::canonical() const {
  std::ostringstream os;
  os << "variant=" << to_string(variant) << ";trunk=";
  for (int f : trunk_filters) os << f << ',';
  os << ";kernel=" << kernel << ";residual=" << residual_blocks << ";arm_filters=" << arm_filters
     << ";arm_kernel=" << arm_kernel << ";arm_dense=";
  for (int d : arm_dense) os << d << ',';
  os << ";vector_dense=";
  for (int d : vector_dense) os << d << ',';
  return os.str();
}

Network::Network(NetworkSpec spec, int nx, int ny) : spec_(std::move(spec)), nx_(nx), ny_(ny) {
  spec_.validate();
  const int shrink = static_cast<int>(spec_.trunk_filters.size()) * (spec_.kernel - 1) +
                     (spec_.arm_kernel - 1);
  if (nx <= shrink || ny <= shrink) {
    throw ShapeError("network: grid " + std::to_string(nx) + "x" + std::to_string(ny) +
                     " is too small for the unpadded convolutions (needs > " +
                     std::to_string(shrink) + " cells per side)");
  }
  const auto k = static_cast<std::size_t>(spec_.kernel);
  std::size_t in = kChannels;
  for (std::size_t l = 0; l < spec_.trunk_filters.size(); ++l) {
    const auto out = static_cast<std::size_t>(spec_.trunk_filters[l]);
    trunk_idx_.push_back(declare("trunk." + std::to_string(l) + ".w", {out, in, k, k}));
    declare("trunk." + std::to_string(l) + ".b", {out});
    in = out;
  }
  for (int r = 0; r < spec_.residual_blocks; ++r) {
    const std::string base = "res." + std::to_string(r);
    std::array<std::size_t, 2> idx{};
    idx[0] = declare(base + ".a.w", {in, in, k, k});
    declare(base + ".a.b", {in});
    idx[1] = declare(base + ".b.w", {in, in, k, k});
    declare(base + ".b.b", {in});
    residual_idx_.push_back(idx);
  }
  std::size_t vin = kVector;
  for (std::size_t l = 0; l < spec_.vector_dense.size(); ++l) {
    const auto out = static_cast<std::size_t>(spec_.vector_dense[l]);
    vector_idx_.push_back(declare("vec." + std::to_string(l) + ".w", {out, vin}));
    declare("vec." + std::to_string(l) + ".b", {out});
    vin = out;
  }
  const std::size_t trunk_h = static_cast<std::size_t>(ny) - (spec_.trunk_filters.size() * (k - 1));
  const std::size_t trunk_w = static_cast<std::size_t>(nx) - (spec_.trunk_filters.size() * (k - 1));
  const auto ak = static_cast<std::size_t>(spec_.arm_kernel);
  const auto af = static_cast<std::size_t>(spec_.arm_filters);
  const std::size_t joined = af * (trunk_h - ak + 1) * (trunk_w - ak + 1) + vin;

  auto arm = [&](const std::string& name, ArmLayout& layout) {
    layout.conv = declare(name + ".conv.w", {af, in, ak, ak});
    declare(name + ".conv.b", {af});
    std::size_t width = joined;
    for (std::size_t l = 0; l < spec_.arm_dense.size(); ++l) {
      const auto out = static_cast<std::size_t>(spec_.arm_dense[l]);
      layout.dense.push_back(declare(name + ".dense." + std::to_string(l) + ".w", {out, width}));
      declare(name + ".dense." + std::to_string(l) + ".b", {out});
      width = out;
    }
    return width;
  };
  const std::size_t pw = arm("policy", policy_);
  const std::size_t vw = arm("value", value_);
  decision_head_ = declare("head.decision.w", {3, pw});
  declare("head.decision.b", {3});
  location_head_ = declare("head.location.w", {static_cast<std::size_t>(nx) * ny, pw});
  declare("head.location.b", {static_cast<std::size_t>(nx) * ny});
  value_head_ = declare("head.value.w", {1, vw});
  declare("head.value.b", {1});
}

std::size_t Network::declare(const std::string& name, std::vector<std::size_t> shape) {
  names_.push_back(name);
  shapes_.push_back(std::move(shape));
  return names_.size() - 1;
}

std::uint64_t Network::spec_hash() const {
  const std::string s =
      spec_.canonical() + ";nx=" + std::to_string(nx_) + ";ny=" + std::to_string(ny_);
  return fnv1a64(s);
}

ParamSet Network::zero_params() const {
  ParamSet p;
  p.names = names_;
  for (const auto& s : shapes_) p.tensors.emplace_back(s, 0.0);
  return p;
}

ParamSet Network::init_params(std::uint64_t seed) const {
  ParamSet p = zero_params();
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < p.size(); ++t) {
    const auto& shape = shapes_[t];
    if (shape.size() == 1) continue;  // bias
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    if (t == decision_head_ || t == location_head_ || t == value_head_) limit *= spec_.head_init_scale;
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : p.tensors[t].storage()) v = dist(rng);
  }
  return p;
}

void Network::forward_arm(const ParamSet& p, const ArmLayout& layout, const Tensor& trunk,
                          const Tensor& embed, ForwardCache::Arm& arm) const {
  const auto& w = p.tensors;
  arm.conv = relu(conv2d(trunk, w[layout.conv], w[layout.conv + 1], 0));
  arm.embed = embed;
  arm.joined = concat(arm.conv, embed);
  arm.hidden.clear();
  const Tensor* x = &arm.joined;
  for (auto idx : layout.dense) {
    arm.hidden.push_back(relu_dense(*x, w[idx], w[idx + 1]));
    x = &arm.hidden.back();
  }
}

PolicyOutput Network::forward(const ParamSet& params, std::span<const double> maps,
                              std::span<const double> vec, ForwardCache* cache) const {
  if (params.size() != shapes_.size()) {
    throw ShapeError("network: expected " + std::to_string(shapes_.size()) +
                     " parameter tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t t = 0; t < shapes_.size(); ++t) {
    if (params.tensors[t].shape() != shapes_[t]) {
      throw ShapeError("network: parameter " + names_[t] + " has shape " +
                       params.tensors[t].shape_string());
    }
  }
  const auto H = static_cast<std::size_t>(ny_), W = static_cast<std::size_t>(nx_);
  if (maps.size() != H * W * kChannels) {
    throw ShapeError("network input: maps have " + std::to_string(maps.size()) +
                     " values, expected " + std::to_string(H * W * kChannels));
  }
  if (vec.size() != kVector) {
    throw ShapeError("network input: vector has " + std::to_string(vec.size()) +
                     " values, expected 3");
  }

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.valid = false;
  const auto& w = params.tensors;

  // HWC -> CHW
  c.input = Tensor({kChannels, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t ch = 0; ch < kChannels; ++ch)
        c.input[(ch * H + y) * W + x] = maps[(y * W + x) * kChannels + ch];

  c.trunk.clear();
  const Tensor* x = &c.input;
  for (auto idx : trunk_idx_) {
    c.trunk.push_back(relu(conv2d(*x, w[idx], w[idx + 1], 0)));
    x = &c.trunk.back();
  }
  c.residual.clear();
  const int pad = (spec_.kernel - 1) / 2;
  for (const auto& idx : residual_idx_) {
    ForwardCache::Residual r;
    r.input = *x;
    r.hidden = relu(conv2d(r.input, w[idx[0]], w[idx[0] + 1], pad));
    r.output = relu(add(conv2d(r.hidden, w[idx[1]], w[idx[1] + 1], pad), r.input));
    c.residual.push_back(std::move(r));
    x = &c.residual.back().output;
  }
  const Tensor& trunk_out = *x;

  c.vec_in = Tensor({kVector}, std::vector<double>(vec.begin(), vec.end()));
  c.vec_hidden.clear();
  const Tensor* v = &c.vec_in;
  for (auto idx : vector_idx_) {
    c.vec_hidden.push_back(relu_dense(*v, w[idx], w[idx + 1]));
    v = &c.vec_hidden.back();
  }
  const Tensor& embed = *v;

  forward_arm(params, policy_, trunk_out, embed, c.policy);
  forward_arm(params, value_, trunk_out, embed, c.value);

  const Tensor& ph = c.policy.hidden.empty() ? c.policy.joined : c.policy.hidden.back();
  const Tensor& vh = c.value.hidden.empty() ? c.value.joined : c.value.hidden.back();
  PolicyOutput out;
  const Tensor d = dense(ph, w[decision_head_], w[decision_head_ + 1]);
  for (int i = 0; i < 3; ++i) out.decision_logits[i] = d[i];
  out.location_logits = dense(ph, w[location_head_], w[location_head_ + 1]).storage();
  out.value = dense(vh, w[value_head_], w[value_head_ + 1])[0];
  c.valid = true;
  return out;
}

void Network::backward_arm(const ParamSet& p, const ArmLayout& layout, const ForwardCache::Arm& arm,
                           const Tensor& trunk, const Tensor& d_last, ParamSet& g, Tensor& d_trunk,
                           Tensor& d_embed) const {
  const auto& w = p.tensors;
  Tensor d = d_last;
  for (std::size_t l = layout.dense.size(); l-- > 0;) {
    const auto idx = layout.dense[l];
    const Tensor d_pre = relu_backward(arm.hidden[l], d);
    const Tensor& in = l == 0 ? arm.joined : arm.hidden[l - 1];
    Tensor d_in(in.shape());
    dense_backward(in, w[idx], d_pre, &d_in, g.tensors[idx], g.tensors[idx + 1]);
    d = std::move(d_in);
  }
  Tensor d_conv(arm.conv.shape());
  Tensor d_emb(arm.embed.shape());
  split(d, d_conv, d_emb);
  for (std::size_t i = 0; i < d_emb.size(); ++i) d_embed[i] += d_emb[i];
  const Tensor d_pre = relu_backward(arm.conv, d_conv);
  conv2d_backward(trunk, w[layout.conv], 0, d_pre, &d_trunk, g.tensors[layout.conv],
                  g.tensors[layout.conv + 1]);
}

ParamSet Network::backward(const ParamSet& params, const ForwardCache& cache,
                           const OutputGrad& grad) const {
  ParamSet g = zero_params();
  backward_into(params, cache, grad, g);
  return g;
}

void Network::backward_into(const ParamSet& params, const ForwardCache& cache,
                            const OutputGrad& grad, ParamSet& g) const {
  if (!cache.valid) throw LifecycleError("network backward called without a recorded forward pass");
  if (grad.location.size() != static_cast<std::size_t>(nx_) * ny_) {
    throw ShapeError("location head gradient has " + std::to_string(grad.location.size()) +
                     " values, expected " + std::to_string(nx_ * ny_));
  }
  if (g.size() != shapes_.size()) throw ShapeError("gradient set does not match the network");
  const auto& w = params.tensors;

  const Tensor& trunk_out = cache.residual.empty() ? cache.trunk.back() : cache.residual.back().output;
  const Tensor& ph = cache.policy.hidden.empty() ? cache.policy.joined : cache.policy.hidden.back();
  const Tensor& vh = cache.value.hidden.empty() ? cache.value.joined : cache.value.hidden.back();

  Tensor d_ph(ph.shape());
  dense_backward(ph, w[decision_head_],
                 Tensor({3}, std::vector<double>(grad.decision.begin(), grad.decision.end())), &d_ph,
                 g.tensors[decision_head_], g.tensors[decision_head_ + 1]);
  dense_backward(ph, w[location_head_], Tensor({grad.location.size()}, grad.location), &d_ph,
                 g.tensors[location_head_], g.tensors[location_head_ + 1]);
  Tensor d_vh(vh.shape());
  dense_backward(vh, w[value_head_], Tensor({1}, std::vector<double>{grad.value}), &d_vh,
                 g.tensors[value_head_], g.tensors[value_head_ + 1]);

  Tensor d_trunk(trunk_out.shape());
  const Tensor& embed = cache.policy.embed;
  Tensor d_embed(embed.shape());
  backward_arm(params, policy_, cache.policy, trunk_out, d_ph, g, d_trunk, d_embed);
  backward_arm(params, value_, cache.value, trunk_out, d_vh, g, d_trunk, d_embed);

  // vector branch
  Tensor dv = std::move(d_embed);
  for (std::size_t l = vector_idx_.size(); l-- > 0;) {
    const auto idx = vector_idx_[l];
    const Tensor d_pre = relu_backward(cache.vec_hidden[l], dv);
    const Tensor& in = l == 0 ? cache.vec_in : cache.vec_hidden[l - 1];
    Tensor d_in(in.shape());
    dense_backward(in, w[idx], d_pre, l == 0 ? nullptr : &d_in, g.tensors[idx], g.tensors[idx + 1]);
    dv = std::move(d_in);
  }

  // residual blocks
  const int pad = (spec_.kernel - 1) / 2;
  Tensor dt = std::move(d_trunk);
  for (std::size_t r = residual_idx_.size(); r-- > 0;) {
    const auto& blk = cache.residual[r];
    const auto& idx = residual_idx_[r];
    const Tensor d_sum = relu_backward(blk.output, dt);
    Tensor d_hidden(blk.hidden.shape());
    conv2d_backward(blk.hidden, w[idx[1]], pad, d_sum, &d_hidden, g.tensors[idx[1]],
                    g.tensors[idx[1] + 1]);
    const Tensor d_hpre = relu_backward(blk.hidden, d_hidden);
    Tensor d_in = d_sum;  // skip connection
    conv2d_backward(blk.input, w[idx[0]], pad, d_hpre, &d_in, g.tensors[idx[0]],
                    g.tensors[idx[0] + 1]);
    dt = std::move(d_in);
  }

  for (std::size_t l = trunk_idx_.size(); l-- > 0;) {
    const auto idx = trunk_idx_[l];
    const Tensor d_pre = relu_backward(cache.trunk[l], dt);
    const Tensor& in = l == 0 ? cache.input : cache.trunk[l - 1];
    Tensor d_in(in.shape());
    conv2d_backward(in, w[idx], 0, d_pre, l == 0 ? nullptr : &d_in, g.tensors[idx],
                    g.tensors[idx + 1]);
    dt = std::move(d_in);
  }
}

}  // namespace fieldev::nn
