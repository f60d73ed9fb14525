#pragma once

#include <array>
#include <random>
#include <vector>

#include "fieldev/fdenv.hpp"
#include "fieldev/nn/network.hpp"

namespace fieldev {

// Logit assigned to disallowed entries before the softmax.
inline constexpr double kMaskedLogit = -1e9;

// Masked categorical distributions of both heads for one state.
struct ActionDistribution {
  std::array<double, 3> decision_logp{};
  std::vector<double> location_logp;
  // When false, the location term only counts for drilling decisions.
  bool location_always_on = true;

  ActionDistribution(const nn::PolicyOutput& out, const ActionMask& mask, bool location_always_on);

  double decision_prob(int d) const;
  double location_prob(int u) const;
  bool location_counts(const Action& a) const;

  double log_prob(const Action& a) const;
  // Sum of both head entropies.
  double entropy() const;

  Action sample(std::mt19937_64& rng) const;
  Action greedy() const;

  // Adds coef_logp * d log_prob(a) / d logits + coef_entropy * d entropy / d logits
  // to the decision/location entries of `grad`.
  void accumulate_grad(const Action& a, double coef_logp, double coef_entropy,
                       nn::OutputGrad& grad) const;
};

// Uniform over allowed decisions, then uniform over free cells.
Action sample_uniform_action(const ActionMask& mask, std::mt19937_64& rng);

}  // namespace fieldev
