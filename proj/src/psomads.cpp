#include "fieldev/psomads.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "fieldev/binary_io.hpp"
#include "fieldev/errors.hpp"
#include "fieldev/parallel.hpp"

namespace fieldev {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void HybridConfig::validate() const {
  if (swarm_size < 2) throw InvalidArgument("psomads: swarm_size must be >= 2");
  if (budget == 0) throw InvalidArgument("psomads: budget must be > 0");
  for (double w : {inertia, cognitive, social})
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("psomads: PSO weights must be >= 0");
  if (mesh_initial < 1 || mesh_max < mesh_initial)
    throw InvalidArgument("psomads: need 1 <= mesh_initial <= mesh_max");
  if (stall < 1) throw InvalidArgument("psomads: stall must be >= 1");
  if (max_idle_rounds < 1) throw InvalidArgument("psomads: max_idle_rounds must be >= 1");
  if (workers < 1) throw InvalidArgument("psomads: workers must be >= 1");
}

bool Bounds::contains(const IntVector& x) const {
  if (x.size() != size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < lower[i] || x[i] > upper[i]) return false;
  return true;
}

IntVector Bounds::clamp(IntVector x) const {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
  return x;
}

void Bounds::validate() const {
  if (lower.empty() || lower.size() != upper.size())
    throw InvalidArgument("psomads: bounds must be non-empty and of equal length");
  for (std::size_t i = 0; i < lower.size(); ++i)
    if (lower[i] > upper[i]) throw InvalidArgument("psomads: lower bound above upper bound");
}

CachedEvaluator::CachedEvaluator(Objective objective, std::uint64_t budget, int workers)
    : objective_(std::move(objective)), budget_(budget), workers_(std::max(1, workers)) {}

std::vector<double> CachedEvaluator::evaluate(const std::vector<IntVector>& points,
                                              const std::string& phase,
                                              std::vector<bool>* available) {
  std::vector<double> values(points.size(), kInf);
  std::vector<bool> have(points.size(), false);
  // New unique points in first-seen order, truncated to the budget.
  std::vector<IntVector> fresh;
  std::set<IntVector> queued;
  for (const auto& p : points) {
    if (cache_.count(p) || queued.count(p)) continue;
    if (evaluations_ + fresh.size() >= budget_) continue;
    queued.insert(p);
    fresh.push_back(p);
  }
  std::vector<EvalRecord> records(fresh.size());
  parallel_for(fresh.size(), workers_, [&](std::size_t k) {
    EvalRecord& r = records[k];
    r.phase = phase;
    r.x = fresh[k];
    try {
      r.value = objective_(fresh[k]);
      if (std::isnan(r.value)) throw NumericalError("objective returned NaN", 0.0);
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
      r.value = kInf;
    }
  });
  for (auto& r : records) {
    r.id = ++evaluations_;
    cache_.emplace(r.x, r.value);
    log_.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto it = cache_.find(points[i]);
    if (it != cache_.end()) {
      values[i] = it->second;
      have[i] = true;
    }
  }
  if (available) *available = std::move(have);
  return values;
}

double CachedEvaluator::evaluate_one(const IntVector& x, const std::string& phase) {
  return evaluate({x}, phase).front();
}

IntVector round_to_lattice(const std::vector<double>& x, const Bounds& bounds) {
  IntVector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = std::clamp(std::round(x[i]), static_cast<double>(bounds.lower[i]),
                                static_cast<double>(bounds.upper[i]));
    out[i] = static_cast<int>(r);
  }
  return out;
}

void reseed_velocities(Swarm& swarm, const Bounds& bounds, std::mt19937_64& rng) {
  for (auto& v : swarm.velocity) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double span = bounds.upper[i] - bounds.lower[i];
      v[i] = std::uniform_real_distribution<double>(-span / 2, span / 2)(rng);
    }
  }
}

namespace {

void update_bests(Swarm& s, const std::vector<IntVector>& points, const std::vector<double>& values,
                  const std::vector<bool>& have, bool& improved) {
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (!have[p]) continue;
    if (values[p] < s.pbest_value[p]) {
      s.pbest_value[p] = values[p];
      s.pbest[p] = points[p];
    }
    if (values[p] < s.gbest_value) {
      s.gbest_value = values[p];
      s.gbest = points[p];
      improved = true;
    }
  }
}

}  // namespace

Swarm init_swarm(const Bounds& bounds, CachedEvaluator& eval, const HybridConfig& config,
                 std::mt19937_64& rng) {
  const std::size_t n = bounds.size();
  const auto m = static_cast<std::size_t>(config.swarm_size);
  Swarm s;
  s.position.assign(m, std::vector<double>(n));
  s.velocity.assign(m, std::vector<double>(n));
  for (auto& x : s.position)
    for (std::size_t i = 0; i < n; ++i)
      x[i] = std::uniform_int_distribution<int>(bounds.lower[i], bounds.upper[i])(rng);
  reseed_velocities(s, bounds, rng);
  std::vector<IntVector> points;
  for (const auto& x : s.position) points.push_back(round_to_lattice(x, bounds));
  std::vector<bool> have;
  const auto values = eval.evaluate(points, "init", &have);
  s.pbest = points;
  s.pbest_value.assign(m, kInf);
  s.gbest = points.front();
  s.gbest_value = kInf;
  bool improved = false;
  update_bests(s, points, values, have, improved);
  return s;
}

bool pso_step(Swarm& s, const Bounds& bounds, CachedEvaluator& eval, const HybridConfig& config,
              std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<IntVector> points;
  for (std::size_t p = 0; p < s.position.size(); ++p) {
    auto& x = s.position[p];
    auto& v = s.velocity[p];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r1 = unit(rng), r2 = unit(rng);
      const double span = bounds.upper[i] - bounds.lower[i];
      v[i] = config.inertia * v[i] + config.cognitive * r1 * (s.pbest[p][i] - x[i]) +
             config.social * r2 * (s.gbest[i] - x[i]);
      v[i] = std::clamp(v[i], -span, span);
      x[i] = std::clamp(x[i] + v[i], static_cast<double>(bounds.lower[i]),
                        static_cast<double>(bounds.upper[i]));
    }
    points.push_back(round_to_lattice(x, bounds));
  }
  std::vector<bool> have;
  const auto values = eval.evaluate(points, "pso", &have);
  bool improved = false;
  update_bests(s, points, values, have, improved);
  return improved;
}

std::vector<IntVector> poll_set(const IntVector& incumbent, int delta, const Bounds& bounds) {
  std::vector<IntVector> out;
  std::set<IntVector> seen{incumbent};
  for (std::size_t i = 0; i < incumbent.size(); ++i) {
    for (int sign : {+1, -1}) {
      IntVector y = incumbent;
      y[i] += sign * delta;
      y = bounds.clamp(std::move(y));
      if (seen.insert(y).second) out.push_back(std::move(y));
    }
  }
  return out;
}

PollResult mads_poll(const IntVector& incumbent, double value, int delta, const Bounds& bounds,
                     CachedEvaluator& eval, const HybridConfig& config) {
  if (delta < 1) throw InvalidArgument("mads: mesh size must be >= 1");
  PollResult r;
  r.incumbent = incumbent;
  r.value = value;
  const auto points = poll_set(incumbent, delta, bounds);
  r.poll_size = points.size();
  std::vector<bool> have;
  const auto values = eval.evaluate(points, "mads", &have);
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (have[k] && values[k] < r.value) {
      r.value = values[k];
      r.incumbent = points[k];
      r.success = true;
    }
  }
  if (r.success) {
    r.delta = std::min(2 * delta, config.mesh_max);
  } else {
    r.terminated = delta == 1;
    r.delta = (delta + 1) / 2;
  }
  return r;
}

OptimizeResult optimize(const Bounds& bounds, const Objective& objective,
                        const HybridConfig& config) {
  config.validate();
  bounds.validate();
  CachedEvaluator eval(objective, config.budget, effective_workers(config.workers));
  std::mt19937_64 rng(config.seed);
  OptimizeResult out;

  Swarm s = init_swarm(bounds, eval, config, rng);
  out.gbest_history.push_back(s.gbest_value);
  int stall = 0;
  int idle = 0;
  while (!eval.exhausted() && idle < config.max_idle_rounds) {
    const auto before = eval.evaluations();
    if (pso_step(s, bounds, eval, config, rng)) {
      stall = 0;
    } else {
      ++stall;
    }
    ++out.pso_iterations;
    out.gbest_history.push_back(s.gbest_value);

    if (stall >= config.stall && !eval.exhausted()) {
      ++out.mads_phases;
      int delta = config.mesh_initial;
      for (;;) {
        const auto poll = mads_poll(s.gbest, s.gbest_value, delta, bounds, eval, config);
        if (poll.success) {
          s.gbest = poll.incumbent;
          s.gbest_value = poll.value;
        }
        out.gbest_history.push_back(s.gbest_value);
        delta = poll.delta;
        if (poll.terminated || eval.exhausted()) break;
      }
      reseed_velocities(s, bounds, rng);
      stall = 0;
    }
    idle = eval.evaluations() == before ? idle + 1 : 0;
  }
  out.best = s.gbest;
  out.best_value = s.gbest_value;
  out.log = eval.log();
  out.evaluations = eval.evaluations();
  return out;
}

Bounds schedule_bounds(const EnvConfig& env) {
  const auto& g = env.model->geometry();
  Bounds b;
  for (int k = 0; k < env.stages; ++k) {
    b.lower.insert(b.lower.end(), {0, 0, 0});
    b.upper.insert(b.upper.end(), {2, g.nx - 1, g.ny - 1});
  }
  return b;
}

std::vector<Action> decode_schedule(const IntVector& x, const GridGeometry& geometry) {
  if (x.size() % 3 != 0) throw InvalidArgument("schedule vector length must be a multiple of 3");
  std::vector<Action> out;
  for (std::size_t k = 0; k < x.size(); k += 3) {
    if (x[k] < 0 || x[k] > 2 || !geometry.contains(x[k + 1], x[k + 2]))
      throw InvalidArgument("schedule vector entry out of bounds at stage " + std::to_string(k / 3));
    out.push_back({x[k], geometry.index(x[k + 1], x[k + 2])});
  }
  return out;
}

IntVector encode_schedule(std::span<const Action> schedule, const GridGeometry& geometry) {
  IntVector x;
  for (const auto& a : schedule) {
    const auto c = decode_location(a.location, geometry);
    x.insert(x.end(), {a.decision, c.i, c.j});
  }
  return x;
}

FdoResult optimize_schedule(const EnvConfig& env, const HybridConfig& config,
                            std::shared_ptr<SimulationCounter> counter) {
  env.validate();
  const auto& g = env.model->geometry();
  Objective obj = [&](const IntVector& x) {
    const auto schedule = decode_schedule(x, g);
    return -run_schedule(schedule, env, counter).npv;
  };
  FdoResult r;
  r.run = optimize(schedule_bounds(env), obj, config);
  r.schedule = decode_schedule(r.run.best, g);
  r.npv = -r.run.best_value;
  r.best = run_schedule(r.schedule, env);
  return r;
}

void write_evaluation_log(const std::filesystem::path& path, const std::vector<EvalRecord>& log,
                          std::size_t dims) {
  std::ostringstream os;
  os << "eval_id,phase";
  for (std::size_t i = 0; i < dims; ++i) os << ",x" << i;
  os << ",npv,sims_total\n" << std::setprecision(12);
  for (const auto& r : log) {
    os << r.id << ',' << r.phase;
    for (int v : r.x) os << ',' << v;
    if (r.failed) {
      os << ",nan";
    } else {
      os << ',' << -r.value;
    }
    os << ',' << r.id << '\n';
  }
  write_text(path, os.str());
}

}  // namespace fieldev
