#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>

#include "fieldev/binary_io.hpp"
#include "fieldev/errors.hpp"
#include "fieldev/nn/adam.hpp"
#include "fieldev/nn/checkpoint.hpp"
#include "fieldev/nn/network.hpp"
#include "fieldev/nn/ops.hpp"

using namespace fieldev;
using namespace fieldev::nn;

namespace {

constexpr double kH = 1e-5;
constexpr double kRel = 1e-4;

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(-scale, scale);
  for (auto& v : t.storage()) v = d(rng);
  return t;
}

bool close(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) <= kRel * scale;
}

// Central differences of a scalar function of one tensor, compared entrywise.
void check_gradient(Tensor& x, const Tensor& analytic, const std::function<double()>& loss,
                    const char* label) {
  REQUIRE(analytic.shape() == x.shape());
  int bad = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + kH;
    const double up = loss();
    x[i] = keep - kH;
    const double down = loss();
    x[i] = keep;
    const double numeric = (up - down) / (2 * kH);
    if (!close(analytic[i], numeric)) {
      if (bad++ < 3) MESSAGE(label << "[" << i << "] analytic " << analytic[i] << " numeric " << numeric);
    }
  }
  CHECK_MESSAGE(bad == 0, label);
}

double weighted_sum(const Tensor& t, const Tensor& w) {
  double s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
  return s;
}

NetworkSpec tiny(NetworkVariant v) {
  NetworkSpec s = v == NetworkVariant::Small ? NetworkSpec::small() : NetworkSpec::large();
  s.trunk_filters = v == NetworkVariant::Small ? std::vector<int>{2, 2, 2} : std::vector<int>{2, 2};
  s.residual_blocks = v == NetworkVariant::Small ? 0 : 2;
  s.arm_filters = 2;
  s.arm_kernel = 1;
  s.arm_dense = {5};
  s.vector_dense = {3, 3};
  return s;
}

struct Inputs {
  std::vector<double> maps, vec;
};

Inputs random_inputs(int nx, int ny, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1, 1);
  Inputs in;
  in.maps.resize(static_cast<std::size_t>(nx * ny * 4));
  for (auto& v : in.maps) v = d(rng);
  in.vec = {d(rng), d(rng), d(rng)};
  return in;
}

ParamSet random_params(const Network& net, std::mt19937_64& rng, double scale) {
  ParamSet p = net.zero_params();
  for (auto& t : p.tensors) {
    std::uniform_real_distribution<double> d(-scale, scale);
    for (auto& v : t.storage()) v = d(rng);
  }
  return p;
}

double output_loss(const PolicyOutput& o, const OutputGrad& w) {
  double s = w.value * o.value;
  for (int i = 0; i < 3; ++i) s += w.decision[i] * o.decision_logits[i];
  for (std::size_t i = 0; i < o.location_logits.size(); ++i) s += w.location[i] * o.location_logits[i];
  return s;
}

OutputGrad random_grad(int cells, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1, 1);
  OutputGrad g;
  for (auto& v : g.decision) v = d(rng);
  g.location.resize(static_cast<std::size_t>(cells));
  for (auto& v : g.location) v = d(rng);
  g.value = d(rng);
  return g;
}

void check_network_gradients(NetworkVariant variant) {
  std::mt19937_64 rng(7);
  Network net(tiny(variant), 8, 8);
  ParamSet p = random_params(net, rng, 0.5);
  const Inputs in = random_inputs(8, 8, rng);
  const OutputGrad w = random_grad(64, rng);
  ForwardCache cache;
  net.forward(p, in.maps, in.vec, &cache);
  const ParamSet g = net.backward(p, cache, w);
  for (std::size_t t = 0; t < p.size(); ++t) {
    check_gradient(p.tensors[t], g.tensors[t],
                   [&] { return output_loss(net.forward(p, in.maps, in.vec), w); },
                   p.names[t].c_str());
  }
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences, valid and same padding") {
  std::mt19937_64 rng(1);
  for (int pad : {0, 1}) {
    Tensor x = random_tensor({2, 6, 5}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    const Tensor y0 = conv2d(x, w, b, pad);
    const Tensor coef = random_tensor(y0.shape(), rng);
    Tensor dx(x.shape()), dw(w.shape()), db(b.shape());
    conv2d_backward(x, w, pad, coef, &dx, dw, db);
    auto loss = [&] { return weighted_sum(conv2d(x, w, b, pad), coef); };
    check_gradient(x, dx, loss, "conv input");
    check_gradient(w, dw, loss, "conv weight");
    check_gradient(b, db, loss, "conv bias");
  }
}

TEST_CASE("dense, relu, residual add and concat gradients match finite differences") {
  std::mt19937_64 rng(2);
  Tensor x = random_tensor({7}, rng);
  Tensor w = random_tensor({4, 7}, rng);
  Tensor b = random_tensor({4}, rng);
  const Tensor coef = random_tensor({4}, rng);
  Tensor dx({7}), dw(w.shape()), db({4});
  dense_backward(x, w, coef, &dx, dw, db);
  auto loss = [&] { return weighted_sum(dense(x, w, b), coef); };
  check_gradient(x, dx, loss, "dense input");
  check_gradient(w, dw, loss, "dense weight");
  check_gradient(b, db, loss, "dense bias");

  Tensor r = random_tensor({3, 4, 4}, rng);
  const Tensor rc = random_tensor(r.shape(), rng);
  const Tensor dr = relu_backward(relu(r), rc);
  check_gradient(r, dr, [&] { return weighted_sum(relu(r), rc); }, "relu");

  Tensor a = random_tensor({2, 3, 3}, rng), c = random_tensor({2, 3, 3}, rng);
  const Tensor ac = random_tensor(a.shape(), rng);
  check_gradient(a, ac, [&] { return weighted_sum(add(a, c), ac); }, "residual add");

  Tensor p = random_tensor({2, 2, 2}, rng), q = random_tensor({5}, rng);
  const Tensor jc = random_tensor({13}, rng);
  Tensor dp(p.shape()), dq(q.shape());
  split(jc, dp, dq);
  auto jl = [&] { return weighted_sum(concat(p, q), jc); };
  check_gradient(p, dp, jl, "concat first");
  check_gradient(q, dq, jl, "concat second");
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
  std::mt19937_64 rng(3);
  Tensor logits = random_tensor({6}, rng, 3.0);
  std::vector<double> grad;
  softmax_cross_entropy(logits.values(), 4, &grad);
  check_gradient(logits, Tensor({6}, grad),
                 [&] { return softmax_cross_entropy(logits.values(), 4); }, "softmax-ce");
}

TEST_CASE("small network: every parameter gradient matches finite differences") {
  check_network_gradients(NetworkVariant::Small);
}

TEST_CASE("large network: every parameter gradient matches finite differences") {
  check_network_gradients(NetworkVariant::Large);
}

TEST_CASE("softmax heads are distributions and masked entries vanish") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor l = random_tensor({9}, rng, 50.0);
    const auto p = softmax(l.values());
    double s = 0;
    for (double v : p) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }
  std::vector<double> masked = {0.3, -1e9, 2.0, -1e9};
  const auto p = softmax(masked);
  CHECK(p[1] < 1e-30);
  CHECK(p[3] < 1e-30);
  CHECK(std::abs(p[0] + p[2] - 1.0) <= 1e-12);
}

TEST_CASE("zero parameters give uniform heads and zero value") {
  Network net(NetworkSpec::small(), 12, 10);
  const ParamSet p = net.zero_params();
  std::mt19937_64 rng(5);
  const Inputs in = random_inputs(12, 10, rng);
  const auto out = net.forward(p, in.maps, in.vec);
  CHECK(out.value == 0.0);
  for (double v : softmax(out.decision_logits)) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
  REQUIRE(out.location_logits.size() == 120);
  for (double v : softmax(out.location_logits)) CHECK(v == doctest::Approx(1.0 / 120).epsilon(1e-12));
}

TEST_CASE("decision probabilities sum to one for initialized networks") {
  for (auto variant : {NetworkVariant::Small, NetworkVariant::Large}) {
    const NetworkSpec spec = variant == NetworkVariant::Small ? NetworkSpec::small() : NetworkSpec::large();
    Network net(spec, 15, 15);
    const ParamSet p = net.init_params(11);
    std::mt19937_64 rng(6);
    const Inputs in = random_inputs(15, 15, rng);
    const auto out = net.forward(p, in.maps, in.vec);
    double s = 0;
    for (double v : softmax(out.decision_logits)) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-6);
    double sl = 0;
    for (double v : softmax(out.location_logits)) sl += v;
    CHECK(std::abs(sl - 1.0) <= 1e-6);
  }
}

TEST_CASE("identity 1x1 convolution reproduces its input") {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({1, 5, 7}, rng);
  const Tensor w({1, 1, 1, 1}, std::vector<double>{1.0});
  const Tensor y = conv2d(x, w, Tensor({1}), 0);
  CHECK(y == x);
}

TEST_CASE("residual blocks keep the spatial shape") {
  std::mt19937_64 rng(9);
  for (int size : {1, 2, 5, 9}) {
    const Tensor x = random_tensor({3, static_cast<std::size_t>(size), static_cast<std::size_t>(size + 1)}, rng);
    const Tensor w = random_tensor({3, 3, 3, 3}, rng);
    const Tensor y = relu(add(conv2d(relu(conv2d(x, w, Tensor({3}), 1)), w, Tensor({3}), 1), x));
    CHECK(y.shape() == x.shape());
  }
}

TEST_CASE("forward is deterministic") {
  Network net(NetworkSpec::large(), 12, 12);
  const ParamSet p = net.init_params(3);
  std::mt19937_64 rng(10);
  const Inputs in = random_inputs(12, 12, rng);
  const auto a = net.forward(p, in.maps, in.vec);
  const auto b = net.forward(p, in.maps, in.vec);
  CHECK(a.decision_logits == b.decision_logits);
  CHECK(a.location_logits == b.location_logits);
  CHECK(a.value == b.value);
}

TEST_CASE("backward: unused head is untouched, gradients are linear in the loss") {
  std::mt19937_64 rng(12);
  Network net(tiny(NetworkVariant::Small), 8, 8);
  const ParamSet p = random_params(net, rng, 0.5);
  const Inputs in = random_inputs(8, 8, rng);
  ForwardCache cache;
  net.forward(p, in.maps, in.vec, &cache);

  OutputGrad only_value;
  only_value.location.assign(64, 0.0);
  only_value.value = 1.0;
  const ParamSet g = net.backward(p, cache, only_value);
  for (std::size_t t = 0; t < g.size(); ++t) {
    if (g.names[t].rfind("head.decision", 0) == 0 || g.names[t].rfind("head.location", 0) == 0 ||
        g.names[t].rfind("policy.", 0) == 0) {
      for (double v : g.tensors[t].values()) CHECK(v == 0.0);
    }
  }

  OutputGrad w = random_grad(64, rng);
  const ParamSet g1 = net.backward(p, cache, w);
  for (auto& v : w.decision) v *= 2;
  for (auto& v : w.location) v *= 2;
  w.value *= 2;
  const ParamSet g2 = net.backward(p, cache, w);
  for (std::size_t t = 0; t < g1.size(); ++t)
    for (std::size_t i = 0; i < g1.tensors[t].size(); ++i)
      CHECK(g2.tensors[t][i] == doctest::Approx(2 * g1.tensors[t][i]).epsilon(1e-12));
}

TEST_CASE("backward without forward is a lifecycle error") {
  Network net(tiny(NetworkVariant::Small), 8, 8);
  const ParamSet p = net.zero_params();
  ForwardCache cache;
  OutputGrad w;
  w.location.assign(64, 0.0);
  CHECK_THROWS_AS(net.backward(p, cache, w), LifecycleError);
}

TEST_CASE("shape errors name the offending layer or input") {
  Network net(tiny(NetworkVariant::Small), 8, 8);
  const ParamSet p = net.zero_params();
  std::vector<double> maps(8 * 8 * 3), vec(3);
  try {
    net.forward(p, maps, vec);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("maps") != std::string::npos);
  }
  ParamSet bad = p;
  bad.tensors[0] = Tensor({1});
  maps.resize(8 * 8 * 4);
  try {
    net.forward(bad, maps, vec);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("trunk.0.w") != std::string::npos);
  }
  CHECK_THROWS_AS(Network(tiny(NetworkVariant::Small), 6, 6), ShapeError);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  std::mt19937_64 rng(13);
  ParamSet p{{"a"}, {random_tensor({5}, rng)}};
  const ParamSet before = p;
  AdamState s = AdamState::like(p);
  for (int i = 0; i < 10; ++i) adam_step(p, p.zeros_like(), s, AdamConfig{});
  CHECK(p == before);
}

TEST_CASE("adam: first step moves against the gradient sign by lr") {
  ParamSet p{{"a"}, {Tensor({4}, std::vector<double>{0, 0, 0, 0})}};
  const ParamSet g{{"a"}, {Tensor({4}, std::vector<double>{3.0, -0.2, 1e-3, -50})}};
  AdamState s = AdamState::like(p);
  AdamConfig cfg;
  adam_step(p, g, s, cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    const double gi = g.tensors[0][i];
    CHECK(p.tensors[0][i] * gi < 0);
    CHECK(std::abs(p.tensors[0][i]) == doctest::Approx(cfg.lr * std::abs(gi) / (std::abs(gi) + cfg.eps)));
  }
}

TEST_CASE("adam: constant gradient steps approach lr in magnitude") {
  ParamSet p{{"a"}, {Tensor({3}, std::vector<double>{0, 0, 0})}};
  const ParamSet g{{"a"}, {Tensor({3}, std::vector<double>{0.7, -4.0, 1e-2})}};
  AdamState s = AdamState::like(p);
  AdamConfig cfg;
  ParamSet prev = p;
  for (int i = 0; i < 1000; ++i) {
    prev = p;
    adam_step(p, g, s, cfg);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const double delta = std::abs(p.tensors[0][i] - prev.tensors[0][i]);
    CHECK(delta >= cfg.lr * 0.99);
    CHECK(delta <= cfg.lr * 1.01);
  }
}

TEST_CASE("adam: non-finite gradient is a training error and changes nothing") {
  ParamSet p{{"a"}, {Tensor({2}, std::vector<double>{1, 2})}};
  const ParamSet before = p;
  ParamSet g{{"a"}, {Tensor({2}, std::vector<double>{0.1, std::nan("")})}};
  AdamState s = AdamState::like(p);
  CHECK_THROWS_AS(adam_step(p, g, s, AdamConfig{}), TrainingError);
  CHECK(p == before);
  CHECK(s.step == 0);
}

TEST_CASE("checkpoint round trip and spec hash refusal") {
  Network net(tiny(NetworkVariant::Large), 8, 8);
  Checkpoint c;
  c.spec_hash = net.spec_hash();
  c.params = net.init_params(21);
  c.adam = AdamState::like(c.params);
  c.adam.step = 4;
  c.adam.m.tensors[1][0] = 0.25;
  c.iteration = 9;
  c.sims_total = 123;
  const auto bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes, net);
  CHECK(back.params == c.params);
  CHECK(back.adam == c.adam);
  CHECK(back.iteration == 9);
  CHECK(back.sims_total == 123);

  Network other(tiny(NetworkVariant::Large), 9, 8);
  CHECK_THROWS_AS(decode_checkpoint(bytes, other), IntegrityError);
  auto corrupt = bytes;
  corrupt[40] ^= 0x10;
  CHECK_THROWS_AS(decode_checkpoint(corrupt, net), IntegrityError);
  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_checkpoint(truncated, net), IntegrityError);
}
