#include "fieldev/fdenv.hpp"

#include <algorithm>
#include <cmath>

#include "fieldev/errors.hpp"

namespace fieldev {

void EnvConfig::validate() const {
  if (!model) throw ConfigError("environment has no geological model");
  if (stages < 1) throw ConfigError("stages must be >= 1");
  if (!(stage_length > 0.0)) throw ConfigError("stage_length must be positive");
  if (max_wells_per_type < 0) throw ConfigError("max_wells_per_type must be >= 0");
  try {
    fluids.validate();
    econ.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (!(wells.producer_bhp < wells.p_init && wells.p_init < wells.injector_bhp)) {
    throw ConfigError("well controls need producer_bhp < p_init < injector_bhp");
  }
  if (!(wells.sw_init >= fluids.swr && wells.sw_init <= 1.0 - fluids.sor)) {
    throw ConfigError("sw_init outside [swr, 1 - sor]");
  }
  const double r_eq = peaceman_equivalent_radius(model->geometry());
  if (!(wells.wellbore_radius > 0.0 && wells.wellbore_radius < r_eq)) {
    throw ConfigError("wellbore_radius must lie in (0, Peaceman radius)");
  }
}

int EnvConfig::well_cap() const {
  return max_wells_per_type > 0 ? max_wells_per_type : model->geometry().cell_count();
}

CellIndex decode_location(int location, const GridGeometry& geometry) {
  if (location < 0 || location >= geometry.cell_count()) {
    throw InvalidArgument("location " + std::to_string(location) + " outside [0, " +
                          std::to_string(geometry.cell_count()) + ")");
  }
  return {location % geometry.nx, location / geometry.nx};
}

namespace {

Observation encode_with(const SimState& state, const GeoModel& model,
                        const std::vector<double>& normalized_perm, int stage,
                        const EnvConfig& config) {
  const auto& g = model.geometry();
  const int n = g.cell_count();
  Observation obs;
  obs.nx = g.nx;
  obs.ny = g.ny;
  obs.maps.assign(static_cast<std::size_t>(n) * kObservationChannels, 0.0);

  double p_lo = config.wells.producer_bhp;
  double p_hi = config.wells.injector_bhp;
  if (config.pressure_normalization == PressureNormalization::MinMax) {
    const auto [lo, hi] = std::minmax_element(state.pressure.begin(), state.pressure.end());
    p_lo = *lo;
    p_hi = *hi;
  }
  const double p_range = p_hi - p_lo;
  for (int c = 0; c < n; ++c) {
    double* cell = &obs.maps[static_cast<std::size_t>(c) * kObservationChannels];
    cell[0] = normalized_perm[c];
    cell[1] = p_range > 0.0 ? std::clamp((state.pressure[c] - p_lo) / p_range, 0.0, 1.0) : 0.0;
    cell[2] = state.sw[c];
  }
  int producers = 0;
  int injectors = 0;
  for (const auto& w : state.wells) {
    const bool prod = w.kind == WellKind::Producer;
    obs.maps[static_cast<std::size_t>(g.index(w.cell.i, w.cell.j)) * kObservationChannels + 3] =
        prod ? -1.0 : 1.0;
    (prod ? producers : injectors) += 1;
  }
  const double stages = config.stages;
  obs.vector = {stage / stages, std::min(1.0, producers / stages),
                std::min(1.0, injectors / stages)};
  return obs;
}

SimState initial_state(const EnvConfig& config) {
  return init_state(*config.model, config.fluids, config.wells.p_init, config.wells.sw_init);
}

}  // namespace

Observation encode_observation(const SimState& state, const GeoModel& model, int stage,
                               const EnvConfig& config) {
  return encode_with(state, model, normalize_permeability(model), stage, config);
}

ActionMask action_mask(const SimState& state, const EnvConfig& config) {
  const auto& g = config.model->geometry();
  ActionMask mask;
  mask.location.assign(static_cast<std::size_t>(g.cell_count()), 1);
  int producers = 0;
  int injectors = 0;
  for (const auto& w : state.wells) {
    mask.location[g.index(w.cell.i, w.cell.j)] = 0;
    (w.kind == WellKind::Producer ? producers : injectors) += 1;
  }
  const bool free_cell =
      std::any_of(mask.location.begin(), mask.location.end(), [](auto v) { return v != 0; });
  mask.decision[static_cast<int>(Decision::DrillProducer)] = free_cell && producers < config.well_cap();
  mask.decision[static_cast<int>(Decision::Nothing)] = true;
  mask.decision[static_cast<int>(Decision::DrillInjector)] = free_cell && injectors < config.well_cap();
  return mask;
}

FieldDevEnv::FieldDevEnv(EnvConfig config, std::shared_ptr<SimulationCounter> counter)
    : config_(std::move(config)), counter_(std::move(counter)) {
  config_.validate();
  normalized_perm_ = normalize_permeability(*config_.model);
}

Observation FieldDevEnv::reset(std::uint64_t /*seed*/) {
  state_ = initial_state(config_);
  token_.reset();
  if (config_.use_restart) token_ = snapshot(state_, config_.model->geometry());
  stage_ = 0;
  started_ = true;
  reports_.clear();
  events_.clear();
  return encode();
}

Observation FieldDevEnv::encode() const {
  return encode_with(state_, *config_.model, normalized_perm_, stage_, config_);
}

Observation FieldDevEnv::observation() const {
  if (!started_) throw LifecycleError("observation requested before reset");
  return encode();
}

ActionMask FieldDevEnv::action_mask() const { return fieldev::action_mask(state_, config_); }

StepResult FieldDevEnv::step(const Action& action) {
  if (!started_) throw LifecycleError("step called before reset");
  if (done()) throw LifecycleError("step called after the final stage");
  if (action.decision < 0 || action.decision > 2) {
    throw InvalidArgument("decision must be 0, 1 or 2, got " + std::to_string(action.decision));
  }
  const auto& g = config_.model->geometry();
  const CellIndex cell = decode_location(action.location, g);

  SimState current = config_.use_restart ? restore(*token_) : state_;
  const double stage_start = stage_ * config_.stage_length;

  StepResult result;
  result.info.stage = stage_;
  const auto decision = static_cast<Decision>(action.decision);
  if (decision != Decision::Nothing) {
    const bool producer = decision == Decision::DrillProducer;
    const auto mask = fieldev::action_mask(current, config_);
    if (!mask.location[action.location] || !mask.decision[action.decision]) {
      result.info.collided = true;
      events_.push_back("stage " + std::to_string(stage_) + ": cannot drill at location " +
                        std::to_string(action.location) + ", treated as do-nothing");
    } else {
      Well w;
      w.kind = producer ? WellKind::Producer : WellKind::Injector;
      w.cell = cell;
      w.bhp = producer ? config_.wells.producer_bhp : config_.wells.injector_bhp;
      w.well_index = peaceman_well_index(*config_.model, cell, config_.wells.wellbore_radius);
      w.drilled_at = stage_start;
      w.stage = stage_;
      current.wells.push_back(w);
      result.info.drilled = w;
    }
  }

  current.time = stage_start;
  auto advanced = advance(current, *config_.model, config_.fluids, config_.stage_length,
                          config_.stepping);
  // With no wells the field is static; only the clock moves.
  advanced.state.time = stage_start + config_.stage_length;
  state_ = std::move(advanced.state);
  if (config_.use_restart) token_ = snapshot(state_, g);

  std::vector<Well> drilled;
  if (result.info.drilled) drilled.push_back(*result.info.drilled);
  result.reward = stage_npv(advanced.report, drilled, config_.econ);
  result.info.wells_total = static_cast<int>(state_.wells.size());
  result.info.volume_balance_error = advanced.report.volume_balance_error;
  result.info.pressure_residual = advanced.report.max_pressure_residual;
  reports_.push_back(std::move(advanced.report));

  ++stage_;
  if (counter_) {
    counter_->add_stage();
    if (done()) counter_->add_episode();
  }
  result.done = done();
  result.observation = encode();
  return result;
}

ScheduleResult run_schedule(std::span<const Action> schedule, const EnvConfig& config,
                            std::shared_ptr<SimulationCounter> counter) {
  if (static_cast<int>(schedule.size()) != config.stages) {
    throw InvalidArgument("schedule has " + std::to_string(schedule.size()) +
                          " actions, expected " + std::to_string(config.stages));
  }
  FieldDevEnv env(config, std::move(counter));
  env.reset();
  ScheduleResult out;
  for (const auto& action : schedule) {
    auto step = env.step(action);
    out.rewards.push_back(step.reward);
    out.steps.push_back(std::move(step));
  }
  out.npv = episode_npv(out.rewards);
  out.final_state = env.state();
  out.reports = env.reports();
  return out;
}

}  // namespace fieldev
