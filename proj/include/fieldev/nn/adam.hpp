#pragma once

#include <cstdint>

#include "fieldev/nn/tensor.hpp"

namespace fieldev::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  ParamSet m, v;
  std::uint64_t step = 0;

  static AdamState like(const ParamSet& params);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// In-place bias-corrected Adam update. Throws TrainingError (and leaves
// params and state untouched) if any gradient is non-finite.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace fieldev::nn
