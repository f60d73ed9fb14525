#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "fieldev/fdenv.hpp"

namespace fieldev {

struct HybridConfig {
  int swarm_size = 40;
  std::uint64_t budget = 10000;  // uncached objective evaluations
  double inertia = 0.72;
  double cognitive = 1.49;
  double social = 1.49;
  int mesh_initial = 4;
  int mesh_max = 8;
  int stall = 5;             // PSO iterations without gbest improvement before polling
  int max_idle_rounds = 200; // rounds in a row with nothing new to evaluate
  int workers = 40;
  std::uint64_t seed = 1;

  // Throws InvalidArgument.
  void validate() const;
};

using IntVector = std::vector<int>;
// Minimized. May throw; a failed evaluation scores +inf and is logged.
using Objective = std::function<double(const IntVector&)>;

struct Bounds {
  IntVector lower, upper;  // inclusive
  std::size_t size() const noexcept { return lower.size(); }
  bool contains(const IntVector& x) const;
  IntVector clamp(IntVector x) const;
  void validate() const;
};

struct EvalRecord {
  std::uint64_t id = 0;  // 1-based, uncached evaluations only
  std::string phase;
  IntVector x;
  double value = 0.0;
  bool failed = false;
  std::string error;
};

// Caches objective values by exact vector and enforces the budget. Only
// uncached evaluations are counted and logged.
class CachedEvaluator {
 public:
  CachedEvaluator(Objective objective, std::uint64_t budget, int workers);

  // Values for `points`, evaluating uncached ones in parallel. Points beyond
  // the remaining budget are left out: the returned flags mark which entries
  // hold a value.
  std::vector<double> evaluate(const std::vector<IntVector>& points, const std::string& phase,
                               std::vector<bool>* available = nullptr);
  double evaluate_one(const IntVector& x, const std::string& phase);

  std::uint64_t evaluations() const noexcept { return evaluations_; }
  std::uint64_t budget() const noexcept { return budget_; }
  std::uint64_t remaining() const noexcept { return budget_ - evaluations_; }
  bool exhausted() const noexcept { return evaluations_ >= budget_; }
  bool cached(const IntVector& x) const { return cache_.count(x) != 0; }
  std::size_t cache_size() const noexcept { return cache_.size(); }
  const std::vector<EvalRecord>& log() const noexcept { return log_; }

 private:
  Objective objective_;
  std::uint64_t budget_;
  int workers_;
  std::uint64_t evaluations_ = 0;
  std::map<IntVector, double> cache_;
  std::vector<EvalRecord> log_;
};

struct Swarm {
  std::vector<std::vector<double>> position, velocity;
  std::vector<IntVector> pbest;
  std::vector<double> pbest_value;
  IntVector gbest;
  double gbest_value = 0.0;
};

IntVector round_to_lattice(const std::vector<double>& x, const Bounds& bounds);

// Random positions and velocities; evaluates the initial swarm.
Swarm init_swarm(const Bounds& bounds, CachedEvaluator& eval, const HybridConfig& config,
                 std::mt19937_64& rng);
void reseed_velocities(Swarm& swarm, const Bounds& bounds, std::mt19937_64& rng);

// One velocity/position update and evaluation round. Returns true when gbest
// strictly improved.
bool pso_step(Swarm& swarm, const Bounds& bounds, CachedEvaluator& eval,
              const HybridConfig& config, std::mt19937_64& rng);

struct PollResult {
  IntVector incumbent;
  double value = 0.0;
  int delta = 1;
  bool success = false;
  bool terminated = false;  // failure at the finest mesh
  std::size_t poll_size = 0;
};

std::vector<IntVector> poll_set(const IntVector& incumbent, int delta, const Bounds& bounds);

// Complete poll of incumbent +/- delta * e_i.
PollResult mads_poll(const IntVector& incumbent, double value, int delta, const Bounds& bounds,
                     CachedEvaluator& eval, const HybridConfig& config);

struct OptimizeResult {
  IntVector best;
  double best_value = 0.0;
  std::vector<double> gbest_history;  // after every round
  std::vector<EvalRecord> log;
  std::uint64_t evaluations = 0;
  int pso_iterations = 0;
  int mads_phases = 0;
};

OptimizeResult optimize(const Bounds& bounds, const Objective& objective,
                        const HybridConfig& config);

// Field development encoding: (decision, x, y) per stage.
Bounds schedule_bounds(const EnvConfig& env);
std::vector<Action> decode_schedule(const IntVector& x, const GridGeometry& geometry);
IntVector encode_schedule(std::span<const Action> schedule, const GridGeometry& geometry);

struct FdoResult {
  OptimizeResult run;
  std::vector<Action> schedule;
  double npv = 0.0;
  ScheduleResult best;  // replayed outside the budget
};

// Maximizes NPV with run_schedule; every uncached evaluation is one flow
// simulation on `counter`.
FdoResult optimize_schedule(const EnvConfig& env, const HybridConfig& config,
                            std::shared_ptr<SimulationCounter> counter = nullptr);

// `eval_id,phase,x0..xn,npv,sims_total`; npv is the negated objective.
void write_evaluation_log(const std::filesystem::path& path, const std::vector<EvalRecord>& log,
                          std::size_t dims);

}  // namespace fieldev
