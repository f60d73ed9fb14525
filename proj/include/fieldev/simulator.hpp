#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fieldev/geomodel.hpp"

namespace fieldev {

// Stand-in fluid description; the defaults are not calibrated to any field.
struct FluidProps {
  double mu_oil = 5.0;    // cP
  double mu_water = 0.5;  // cP
  double swr = 0.2;
  double sor = 0.2;
  double n_w = 2.0;
  double n_o = 2.0;

  void validate() const;

  double krw(double sw) const;
  double kro(double sw) const;
  // Phase mobilities in 1/(Pa s).
  double water_mobility(double sw) const;
  double oil_mobility(double sw) const;
  double total_mobility(double sw) const { return water_mobility(sw) + oil_mobility(sw); }
  double water_fraction(double sw) const;
  // Upper bound of df_w/dsw over the mobile range (sampled).
  double max_fraction_slope() const;
};

enum class WellKind : std::uint8_t { Producer = 0, Injector = 1 };

const char* to_string(WellKind kind) noexcept;

struct Well {
  WellKind kind = WellKind::Producer;
  CellIndex cell;
  double bhp = 0.0;         // Pa
  double well_index = 0.0;  // m^3 (geometric part; multiplied by mobility)
  double drilled_at = 0.0;  // days since episode start
  int stage = 0;
  // Cumulative reservoir volumes, m^3.
  double cum_oil = 0.0;
  double cum_water_produced = 0.0;
  double cum_water_injected = 0.0;

  friend bool operator==(const Well&, const Well&) = default;
};

struct SimState {
  std::vector<double> pressure;  // Pa
  std::vector<double> sw;
  double time = 0.0;  // days
  std::vector<Well> wells;

  friend bool operator==(const SimState&, const SimState&) = default;
};

// Rates per well per transport sub-step, STB/day, all non-negative.
struct WellRates {
  int well = 0;  // position in SimState::wells
  WellKind kind = WellKind::Producer;
  std::vector<double> q_oil;
  std::vector<double> q_water_produced;
  std::vector<double> q_water_injected;
};

struct StageReport {
  std::vector<double> dt;     // days
  std::vector<double> t_end;  // days since episode start
  std::vector<WellRates> wells;
  double volume_balance_error = 0.0;   // relative
  double max_pressure_residual = 0.0;  // relative, over all solves
  int pressure_solves = 0;

  std::size_t steps() const noexcept { return dt.size(); }
  double duration() const;
};

// Pressure-step and CFL controls for advance().
struct TimeStepping {
  double pressure_step = 10.0;  // days; steps are aligned to multiples of this
  double cfl = 0.5;
  long max_substeps = 1'000'000;
};

inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kCubicMetresPerStb = 0.158987;
inline constexpr double kPressureResidualTolerance = 1e-10;

SimState init_state(const GeoModel& model, const FluidProps& fluids, double p_init,
                    double sw_init);

// Isotropic Peaceman coupling 2*pi*k*h / ln(r_eq/rw), r_eq = 0.14*sqrt(dx^2+dy^2).
double peaceman_equivalent_radius(const GridGeometry& geometry);
double peaceman_well_index(const GeoModel& model, CellIndex cell, double rw);

// Generic two-point system: sum_f T_f (p_c - p_n) + sum_w C_w (p_c - bhp_w) = 0.
struct TpfaFace {
  int a = 0;
  int b = 0;
  double coefficient = 0.0;
};
struct TpfaSource {
  int cell = 0;
  double coefficient = 0.0;
  double bhp = 0.0;
};
struct PressureSolution {
  std::vector<double> pressure;
  double relative_residual = 0.0;
};

PressureSolution solve_tpfa(int cell_count, std::span<const TpfaFace> faces,
                            std::span<const TpfaSource> sources);

// Throws NumericalError when the state has no wells (singular system).
PressureSolution solve_pressure(const SimState& state, const GeoModel& model,
                                const FluidProps& fluids);

struct AdvanceResult {
  SimState state;
  StageReport report;
};

AdvanceResult advance(const SimState& state, const GeoModel& model, const FluidProps& fluids,
                      double duration, const TimeStepping& stepping = {});

// Serialized SimState: header {magic, version, nx, ny, time, well count},
// little-endian fields, trailing CRC-32.
struct RestartToken {
  std::vector<std::uint8_t> bytes;
  friend bool operator==(const RestartToken&, const RestartToken&) = default;
};

RestartToken snapshot(const SimState& state, const GridGeometry& geometry);
SimState restore(const RestartToken& token);
void save_token(const RestartToken& token, const std::filesystem::path& path);
RestartToken load_token(const std::filesystem::path& path);

}  // namespace fieldev
