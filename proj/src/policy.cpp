#include "fieldev/policy.hpp"

#include <algorithm>
#include <cmath>

#include "fieldev/errors.hpp"
#include "fieldev/nn/ops.hpp"

namespace fieldev {

namespace {

std::vector<double> masked_log_softmax(std::span<const double> logits, auto allowed) {
  std::vector<double> z(logits.begin(), logits.end());
  for (std::size_t i = 0; i < z.size(); ++i)
    if (!allowed(i)) z[i] = kMaskedLogit;
  return nn::log_softmax(z);
}

double entropy_of(const std::vector<double>& logp) {
  double h = 0.0;
  for (double lp : logp) {
    const double p = std::exp(lp);
    if (p > 0.0) h -= p * lp;
  }
  return h;
}

// d H / d z_i = -p_i (log p_i + H)
template <class Out>
void add_entropy_grad(const std::vector<double>& logp, double coef, Out& out) {
  const double h = entropy_of(logp);
  for (std::size_t i = 0; i < logp.size(); ++i) {
    const double p = std::exp(logp[i]);
    if (p > 0.0) out[i] += coef * (-p * (logp[i] + h));
  }
}

template <class Out>
void add_logp_grad(const std::vector<double>& logp, std::size_t chosen, double coef, Out& out) {
  for (std::size_t i = 0; i < logp.size(); ++i) {
    out[i] += coef * ((i == chosen ? 1.0 : 0.0) - std::exp(logp[i]));
  }
}

std::size_t sample_index(const std::vector<double>& logp, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    const double p = std::exp(logp[i]);
    if (p <= 0.0) continue;
    last = i;
    acc += p;
    if (r < acc) return i;
  }
  return last;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

ActionDistribution::ActionDistribution(const nn::PolicyOutput& out, const ActionMask& mask,
                                       bool always_on)
    : location_always_on(always_on) {
  if (out.location_logits.size() != mask.location.size()) {
    throw ShapeError("policy: location head has " + std::to_string(out.location_logits.size()) +
                     " logits for " + std::to_string(mask.location.size()) + " cells");
  }
  const auto d = masked_log_softmax(out.decision_logits, [&](std::size_t i) { return mask.decision[i]; });
  std::copy(d.begin(), d.end(), decision_logp.begin());
  const bool any_free = std::any_of(mask.location.begin(), mask.location.end(),
                                    [](auto v) { return v != 0; });
  // A full grid leaves nothing to choose; keep the head well defined.
  location_logp = masked_log_softmax(out.location_logits, [&](std::size_t i) {
    return !any_free || mask.location[i] != 0;
  });
}

double ActionDistribution::decision_prob(int d) const { return std::exp(decision_logp.at(d)); }
double ActionDistribution::location_prob(int u) const { return std::exp(location_logp.at(u)); }

bool ActionDistribution::location_counts(const Action& a) const {
  return location_always_on || a.decision != static_cast<int>(Decision::Nothing);
}

double ActionDistribution::log_prob(const Action& a) const {
  double lp = decision_logp.at(a.decision);
  if (location_counts(a)) lp += location_logp.at(a.location);
  return lp;
}

double ActionDistribution::entropy() const {
  std::vector<double> d(decision_logp.begin(), decision_logp.end());
  return entropy_of(d) + entropy_of(location_logp);
}

Action ActionDistribution::sample(std::mt19937_64& rng) const {
  std::vector<double> d(decision_logp.begin(), decision_logp.end());
  Action a;
  a.decision = static_cast<int>(sample_index(d, rng));
  a.location = static_cast<int>(sample_index(location_logp, rng));
  return a;
}

Action ActionDistribution::greedy() const {
  std::vector<double> d(decision_logp.begin(), decision_logp.end());
  return {static_cast<int>(argmax(d)), static_cast<int>(argmax(location_logp))};
}

void ActionDistribution::accumulate_grad(const Action& a, double coef_logp, double coef_entropy,
                                         nn::OutputGrad& grad) const {
  std::vector<double> d(decision_logp.begin(), decision_logp.end());
  if (grad.location.size() != location_logp.size()) grad.location.assign(location_logp.size(), 0.0);
  if (coef_logp != 0.0) {
    add_logp_grad(d, static_cast<std::size_t>(a.decision), coef_logp, grad.decision);
    if (location_counts(a))
      add_logp_grad(location_logp, static_cast<std::size_t>(a.location), coef_logp, grad.location);
  }
  if (coef_entropy != 0.0) {
    add_entropy_grad(d, coef_entropy, grad.decision);
    add_entropy_grad(location_logp, coef_entropy, grad.location);
  }
}

Action sample_uniform_action(const ActionMask& mask, std::mt19937_64& rng) {
  std::vector<int> decisions;
  for (int d = 0; d < 3; ++d)
    if (mask.decision[d]) decisions.push_back(d);
  std::vector<int> cells;
  for (std::size_t u = 0; u < mask.location.size(); ++u)
    if (mask.location[u]) cells.push_back(static_cast<int>(u));
  Action a;
  a.decision = decisions[std::uniform_int_distribution<std::size_t>(0, decisions.size() - 1)(rng)];
  a.location = cells.empty()
                   ? 0
                   : cells[std::uniform_int_distribution<std::size_t>(0, cells.size() - 1)(rng)];
  return a;
}

}  // namespace fieldev
