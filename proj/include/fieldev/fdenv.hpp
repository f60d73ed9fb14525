#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fieldev/economics.hpp"
#include "fieldev/geomodel.hpp"
#include "fieldev/simulator.hpp"

namespace fieldev {

// Fixed operating settings. Stand-in values, not taken from any field case.
struct WellSettings {
  double p_init = 20e6;          // Pa
  double sw_init = 0.2;
  double producer_bhp = 15e6;    // Pa
  double injector_bhp = 30e6;    // Pa
  double wellbore_radius = 0.1;  // m
};

enum class PressureNormalization { FixedBounds, MinMax };

struct EnvConfig {
  std::shared_ptr<const GeoModel> model;
  FluidProps fluids;
  EconParams econ;
  WellSettings wells;
  TimeStepping stepping;
  int stages = 5;
  double stage_length = 150.0;  // days
  int max_wells_per_type = 0;   // 0 means nx*ny
  PressureNormalization pressure_normalization = PressureNormalization::FixedBounds;
  bool use_restart = true;

  // Throws ConfigError.
  void validate() const;
  int well_cap() const;
};

// Shifted ternary: 0 drill producer, 1 do nothing, 2 drill injector.
enum class Decision : int { DrillProducer = 0, Nothing = 1, DrillInjector = 2 };

struct Action {
  int decision = static_cast<int>(Decision::Nothing);
  int location = 0;  // j * nx + i
  friend bool operator==(const Action&, const Action&) = default;
};

inline constexpr int kObservationChannels = 4;

struct Observation {
  int nx = 0;
  int ny = 0;
  // (ny, nx, 4): log-permeability, pressure, saturation, well mask.
  std::vector<double> maps;
  // stage / stages, producers / stages, injectors / stages.
  std::array<double, 3> vector{};

  double at(int j, int i, int channel) const {
    return maps[(static_cast<std::size_t>(j) * nx + i) * kObservationChannels + channel];
  }
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct ActionMask {
  std::array<bool, 3> decision{};
  std::vector<std::uint8_t> location;  // 1 where a well may be drilled
};

struct StepInfo {
  int stage = 0;  // stage just simulated
  std::optional<Well> drilled;
  bool collided = false;
  int wells_total = 0;
  double volume_balance_error = 0.0;
  double pressure_residual = 0.0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;  // dollars
  bool done = false;
  StepInfo info;
};

// Shared tally of simulation work. `episodes` counts complete flow
// simulations and is what optimizer budgets refer to.
class SimulationCounter {
 public:
  void add_episode() noexcept { episodes_.fetch_add(1, std::memory_order_relaxed); }
  void add_stage() noexcept { stages_.fetch_add(1, std::memory_order_relaxed); }
  std::uint64_t episodes() const noexcept { return episodes_.load(std::memory_order_relaxed); }
  std::uint64_t stage_advances() const noexcept { return stages_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> episodes_{0};
  std::atomic<std::uint64_t> stages_{0};
};

CellIndex decode_location(int location, const GridGeometry& geometry);

Observation encode_observation(const SimState& state, const GeoModel& model, int stage,
                               const EnvConfig& config);
ActionMask action_mask(const SimState& state, const EnvConfig& config);

class FieldDevEnv {
 public:
  explicit FieldDevEnv(EnvConfig config, std::shared_ptr<SimulationCounter> counter = nullptr);

  // The environment is deterministic; the seed is accepted for API symmetry.
  Observation reset(std::uint64_t seed = 0);
  StepResult step(const Action& action);

  ActionMask action_mask() const;
  Observation observation() const;

  const EnvConfig& config() const noexcept { return config_; }
  const SimState& state() const noexcept { return state_; }
  int stage() const noexcept { return stage_; }
  bool done() const noexcept { return stage_ >= config_.stages; }
  const std::vector<StageReport>& reports() const noexcept { return reports_; }
  const std::vector<std::string>& events() const noexcept { return events_; }

 private:
  Observation encode() const;

  EnvConfig config_;
  std::shared_ptr<SimulationCounter> counter_;
  std::vector<double> normalized_perm_;
  SimState state_;
  std::optional<RestartToken> token_;
  int stage_ = 0;
  bool started_ = false;
  std::vector<StageReport> reports_;
  std::vector<std::string> events_;
};

struct ScheduleResult {
  double npv = 0.0;
  std::vector<double> rewards;
  std::vector<StepResult> steps;
  SimState final_state;
  std::vector<StageReport> reports;
};

// Replays `schedule` (one action per stage) from reset. Throws
// InvalidArgument when the length differs from config.stages.
ScheduleResult run_schedule(std::span<const Action> schedule, const EnvConfig& config,
                            std::shared_ptr<SimulationCounter> counter = nullptr);

}  // namespace fieldev
