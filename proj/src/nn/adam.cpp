#include "fieldev/nn/adam.hpp"

#include <cmath>

#include "fieldev/errors.hpp"

namespace fieldev::nn {

void AdamConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("adam: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw InvalidArgument("adam: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw InvalidArgument("adam: eps must be positive");
}

AdamState AdamState::like(const ParamSet& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam: gradient/moment sets do not match the parameters");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (grads.tensors[t].shape() != params.tensors[t].shape() ||
        state.m.tensors[t].shape() != params.tensors[t].shape() ||
        state.v.tensors[t].shape() != params.tensors[t].shape()) {
      throw ShapeError("adam: shape mismatch for " + params.names.at(t));
    }
    if (!grads.tensors[t].all_finite())
      throw TrainingError("adam: non-finite gradient in " + params.names.at(t));
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params.tensors[t].values();
    auto g = grads.tensors[t].values();
    auto m = state.m.tensors[t].values();
    auto v = state.v.tensors[t].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      p[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

}  // namespace fieldev::nn
