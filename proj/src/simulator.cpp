#include "fieldev/simulator.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fieldev/errors.hpp"

namespace fieldev {

namespace {

constexpr double kCentipoise = 1e-3;  // Pa s

double normalized_saturation(const FluidProps& f, double sw) {
  const double se = (sw - f.swr) / (1.0 - f.swr - f.sor);
  return std::clamp(se, 0.0, 1.0);
}

}  // namespace

void FluidProps::validate() const {
  if (!(mu_oil > 0.0) || !(mu_water > 0.0)) throw InvalidArgument("viscosities must be positive");
  if (!(n_w >= 1.0) || !(n_o >= 1.0)) throw InvalidArgument("Corey exponents must be >= 1");
  if (!(swr >= 0.0) || !(sor >= 0.0) || !(swr + sor < 1.0)) {
    throw InvalidArgument("residual saturations need swr, sor >= 0 and swr + sor < 1");
  }
}

double FluidProps::krw(double sw) const { return std::pow(normalized_saturation(*this, sw), n_w); }

double FluidProps::kro(double sw) const {
  return std::pow(1.0 - normalized_saturation(*this, sw), n_o);
}

double FluidProps::water_mobility(double sw) const { return krw(sw) / (mu_water * kCentipoise); }

double FluidProps::oil_mobility(double sw) const { return kro(sw) / (mu_oil * kCentipoise); }

double FluidProps::water_fraction(double sw) const {
  const double lw = water_mobility(sw);
  return lw / (lw + oil_mobility(sw));
}

double FluidProps::max_fraction_slope() const {
  constexpr int kSamples = 2000;
  const double lo = swr;
  const double width = 1.0 - swr - sor;
  double best = 0.0;
  double prev = water_fraction(lo);
  for (int s = 1; s <= kSamples; ++s) {
    const double sw = lo + width * s / kSamples;
    const double cur = water_fraction(sw);
    best = std::max(best, (cur - prev) / (width / kSamples));
    prev = cur;
  }
  // Chord slopes underestimate the peak tangent slope slightly.
  return 1.05 * best;
}

const char* to_string(WellKind kind) noexcept {
  return kind == WellKind::Producer ? "producer" : "injector";
}

double StageReport::duration() const {
  double total = 0.0;
  for (double d : dt) total += d;
  return total;
}

SimState init_state(const GeoModel& model, const FluidProps& fluids, double p_init,
                    double sw_init) {
  fluids.validate();
  if (!std::isfinite(p_init)) throw InvalidArgument("initial pressure must be finite");
  if (!(sw_init >= fluids.swr && sw_init <= 1.0 - fluids.sor)) {
    throw InvalidArgument("initial water saturation " + std::to_string(sw_init) +
                          " outside mobile range [swr, 1 - sor]");
  }
  const auto n = static_cast<std::size_t>(model.geometry().cell_count());
  SimState s;
  s.pressure.assign(n, p_init);
  s.sw.assign(n, sw_init);
  return s;
}

double peaceman_equivalent_radius(const GridGeometry& g) {
  return 0.14 * std::sqrt(g.dx * g.dx + g.dy * g.dy);
}

double peaceman_well_index(const GeoModel& model, CellIndex cell, double rw) {
  const auto& g = model.geometry();
  if (!g.contains(cell.i, cell.j)) throw InvalidArgument("well cell outside grid");
  const double r_eq = peaceman_equivalent_radius(g);
  if (!(rw > 0.0) || !(rw < r_eq)) {
    throw InvalidArgument("wellbore radius must lie in (0, " + std::to_string(r_eq) + ") m");
  }
  const double k = model.permeability(g.index(cell.i, cell.j)) * kMilliDarcy;
  return 2.0 * std::numbers::pi * k * g.thickness / std::log(r_eq / rw);
}

PressureSolution solve_tpfa(int cell_count, std::span<const TpfaFace> faces,
                            std::span<const TpfaSource> sources) {
  if (sources.empty()) {
    throw NumericalError("pressure system is singular: no wells anchor the incompressible field");
  }
  double scale = 0.0;
  for (const auto& f : faces) scale = std::max(scale, f.coefficient);
  for (const auto& s : sources) scale = std::max(scale, s.coefficient);
  if (!(scale > 0.0)) throw NumericalError("pressure system has no positive coefficients");

  using SpMat = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(4 * faces.size() + sources.size());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(cell_count);
  for (const auto& f : faces) {
    const double t = f.coefficient / scale;
    triplets.emplace_back(f.a, f.a, t);
    triplets.emplace_back(f.b, f.b, t);
    triplets.emplace_back(f.a, f.b, -t);
    triplets.emplace_back(f.b, f.a, -t);
  }
  for (const auto& s : sources) {
    const double c = s.coefficient / scale;
    triplets.emplace_back(s.cell, s.cell, c);
    rhs[s.cell] += c * s.bhp;
  }
  SpMat a(cell_count, cell_count);
  a.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::SimplicialLDLT<SpMat> solver(a);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("pressure matrix factorization failed");
  }
  Eigen::VectorXd p = solver.solve(rhs);
  const double rhs_norm = rhs.norm();
  auto residual = [&] {
    const Eigen::VectorXd r = rhs - a * p;
    return rhs_norm > 0.0 ? r.norm() / rhs_norm : r.norm();
  };
  double rel = residual();
  for (int pass = 0; pass < 3 && rel > kPressureResidualTolerance; ++pass) {
    p += solver.solve(Eigen::VectorXd(rhs - a * p));
    rel = residual();
  }
  if (!(rel <= kPressureResidualTolerance) || !p.allFinite()) {
    throw NumericalError("pressure solve did not converge, relative residual " +
                             std::to_string(rel),
                         rel);
  }
  PressureSolution out;
  out.pressure.assign(p.data(), p.data() + cell_count);
  out.relative_residual = rel;
  return out;
}

namespace {

// Geometric transmissibilities with harmonic permeability averaging, m^3.
std::vector<TpfaFace> geometric_faces(const GeoModel& model) {
  const auto& g = model.geometry();
  std::vector<TpfaFace> faces;
  faces.reserve(static_cast<std::size_t>(2 * g.cell_count()));
  auto harmonic = [](double a, double b) { return 2.0 * a * b / (a + b); };
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int c = g.index(i, j);
      if (i + 1 < g.nx) {
        const int n = g.index(i + 1, j);
        const double k = harmonic(model.permeability(c), model.permeability(n)) * kMilliDarcy;
        faces.push_back({c, n, k * g.dy * g.thickness / g.dx});
      }
      if (j + 1 < g.ny) {
        const int n = g.index(i, j + 1);
        const double k = harmonic(model.permeability(c), model.permeability(n)) * kMilliDarcy;
        faces.push_back({c, n, k * g.dx * g.thickness / g.dy});
      }
    }
  }
  return faces;
}

struct FlowField {
  std::vector<TpfaFace> faces;  // coefficient = T * face mobility
  std::vector<double> face_flux;  // m^3/s, positive from a to b
  std::vector<double> well_rate;  // m^3/s, positive into the reservoir
  std::vector<double> pressure;
  double residual = 0.0;
};

FlowField solve_flow(const SimState& state, const GeoModel& model, const FluidProps& fluids,
                     const std::vector<TpfaFace>& geometric) {
  const auto& g = model.geometry();
  std::vector<double> lambda(state.sw.size());
  for (std::size_t c = 0; c < lambda.size(); ++c) lambda[c] = fluids.total_mobility(state.sw[c]);

  FlowField flow;
  flow.faces = geometric;
  for (auto& f : flow.faces) f.coefficient *= 0.5 * (lambda[f.a] + lambda[f.b]);
  std::vector<TpfaSource> sources;
  sources.reserve(state.wells.size());
  for (const auto& w : state.wells) {
    const int c = g.index(w.cell.i, w.cell.j);
    sources.push_back({c, w.well_index * lambda[c], w.bhp});
  }
  // A single shared bhp is the exact solution: the closed box sits at that
  // pressure and nothing flows. Solving would only produce round-off rates.
  const bool uniform_bhp = std::all_of(sources.begin(), sources.end(),
                                       [&](const TpfaSource& s) { return s.bhp == sources[0].bhp; });
  if (uniform_bhp) {
    flow.pressure.assign(static_cast<std::size_t>(g.cell_count()), sources.at(0).bhp);
    flow.residual = 0.0;
  } else {
    auto sol = solve_tpfa(g.cell_count(), flow.faces, sources);
    flow.pressure = std::move(sol.pressure);
    flow.residual = sol.relative_residual;
  }

  flow.face_flux.resize(flow.faces.size());
  for (std::size_t f = 0; f < flow.faces.size(); ++f) {
    const auto& face = flow.faces[f];
    flow.face_flux[f] = face.coefficient * (flow.pressure[face.a] - flow.pressure[face.b]);
  }

  double rate_scale = 0.0;
  flow.well_rate.resize(state.wells.size());
  for (std::size_t w = 0; w < state.wells.size(); ++w) {
    const auto& src = sources[w];
    flow.well_rate[w] = src.coefficient * (src.bhp - flow.pressure[src.cell]);
    rate_scale = std::max(rate_scale, src.coefficient * std::abs(src.bhp));
  }
  // BHP-controlled wells never reverse under the maximum principle; anything
  // beyond round-off is a configuration error (e.g. injector bhp below a producer's).
  const double tol = 1e-9 * rate_scale;
  for (std::size_t w = 0; w < state.wells.size(); ++w) {
    double& q = flow.well_rate[w];
    const bool injector = state.wells[w].kind == WellKind::Injector;
    if ((injector && q < -tol) || (!injector && q > tol)) {
      throw NumericalError("well " + std::to_string(w) + " (" + to_string(state.wells[w].kind) +
                           ") reverses flow; check bhp settings");
    }
    q = injector ? std::max(q, 0.0) : std::min(q, 0.0);
  }
  return flow;
}

double to_stb_per_day(double m3_per_s) {
  return m3_per_s * kSecondsPerDay / kCubicMetresPerStb;
}

}  // namespace

PressureSolution solve_pressure(const SimState& state, const GeoModel& model,
                                const FluidProps& fluids) {
  if (state.wells.empty()) {
    throw NumericalError("pressure system is singular: no wells anchor the incompressible field");
  }
  auto flow = solve_flow(state, model, fluids, geometric_faces(model));
  return {std::move(flow.pressure), flow.residual};
}

AdvanceResult advance(const SimState& state, const GeoModel& model, const FluidProps& fluids,
                      double duration, const TimeStepping& stepping) {
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw InvalidArgument("advance duration must be positive");
  }
  if (!(stepping.pressure_step > 0.0) || !(stepping.cfl > 0.0 && stepping.cfl <= 1.0)) {
    throw InvalidArgument("pressure_step must be positive and cfl in (0, 1]");
  }
  AdvanceResult out{state, {}};
  StageReport& report = out.report;
  if (state.wells.empty()) return out;

  SimState& s = out.state;
  const auto& g = model.geometry();
  const int n_cells = g.cell_count();
  const std::size_t n_wells = s.wells.size();
  const auto geometric = geometric_faces(model);
  const double slope = fluids.max_fraction_slope();
  const double lo = fluids.swr;
  const double hi = 1.0 - fluids.sor;
  constexpr double kBoundTol = 1e-10;

  std::vector<double> pore(n_cells);
  for (int c = 0; c < n_cells; ++c) pore[c] = model.pore_volume(c);
  std::vector<int> well_cell(n_wells);
  for (std::size_t w = 0; w < n_wells; ++w) {
    well_cell[w] = g.index(s.wells[w].cell.i, s.wells[w].cell.j);
  }
  report.wells.resize(n_wells);
  for (std::size_t w = 0; w < n_wells; ++w) {
    report.wells[w].well = static_cast<int>(w);
    report.wells[w].kind = s.wells[w].kind;
  }

  const std::vector<double> sw_start = s.sw;
  double injected = 0.0;
  double produced_water = 0.0;
  double produced_oil = 0.0;
  long substeps_total = 0;

  const double t_final = s.time + duration;
  const double step = stepping.pressure_step;
  std::vector<double> water_net(n_cells);
  std::vector<double> throughput_in(n_cells);
  std::vector<double> throughput_out(n_cells);

  while (s.time < t_final) {
    // Pressure steps sit on a global grid of multiples of `step`, so splitting
    // an advance at a grid point reproduces the unsplit sequence exactly.
    double k = std::floor(s.time / step);
    double step_end = (k + 1.0) * step;
    if (step_end - s.time <= 1e-9 * step) step_end += step;
    step_end = std::min(step_end, t_final);
    const double step_start = s.time;
    const double step_days = step_end - step_start;

    const FlowField flow = solve_flow(s, model, fluids, geometric);
    s.pressure = flow.pressure;
    report.max_pressure_residual = std::max(report.max_pressure_residual, flow.residual);
    ++report.pressure_solves;

    std::fill(throughput_in.begin(), throughput_in.end(), 0.0);
    std::fill(throughput_out.begin(), throughput_out.end(), 0.0);
    for (std::size_t f = 0; f < flow.faces.size(); ++f) {
      const double q = flow.face_flux[f];
      const int up = q >= 0.0 ? flow.faces[f].a : flow.faces[f].b;
      const int down = q >= 0.0 ? flow.faces[f].b : flow.faces[f].a;
      throughput_out[up] += std::abs(q);
      throughput_in[down] += std::abs(q);
    }
    for (std::size_t w = 0; w < n_wells; ++w) {
      const double q = flow.well_rate[w];
      if (q > 0.0) throughput_in[well_cell[w]] += q;
      else throughput_out[well_cell[w]] -= q;
    }
    double dt_cfl = std::numeric_limits<double>::infinity();
    for (int c = 0; c < n_cells; ++c) {
      const double through = std::max(throughput_in[c], throughput_out[c]);
      if (through > 0.0) dt_cfl = std::min(dt_cfl, stepping.cfl * pore[c] / (slope * through));
    }
    const double step_seconds = step_days * kSecondsPerDay;
    const double pieces = std::isfinite(dt_cfl) ? std::ceil(step_seconds / dt_cfl) : 1.0;
    if (substeps_total + pieces > static_cast<double>(stepping.max_substeps)) {
      throw NumericalError("CFL sub-step limit exceeded (" +
                           std::to_string(stepping.max_substeps) + " sub-steps)");
    }
    const long n_sub = std::max(1L, static_cast<long>(pieces));
    const double dt_days = step_days / static_cast<double>(n_sub);
    const double dt = dt_days * kSecondsPerDay;

    for (long sub = 0; sub < n_sub; ++sub) {
      std::fill(water_net.begin(), water_net.end(), 0.0);
      for (std::size_t f = 0; f < flow.faces.size(); ++f) {
        const double q = flow.face_flux[f];
        const int up = q >= 0.0 ? flow.faces[f].a : flow.faces[f].b;
        const int down = q >= 0.0 ? flow.faces[f].b : flow.faces[f].a;
        const double qw = fluids.water_fraction(s.sw[up]) * std::abs(q);
        water_net[up] -= qw;
        water_net[down] += qw;
      }
      for (std::size_t w = 0; w < n_wells; ++w) {
        const int c = well_cell[w];
        const double q = flow.well_rate[w];
        auto& rates = report.wells[w];
        auto& well = s.wells[w];
        if (s.wells[w].kind == WellKind::Injector) {
          water_net[c] += q;
          injected += q * dt;
          well.cum_water_injected += q * dt;
          rates.q_oil.push_back(0.0);
          rates.q_water_produced.push_back(0.0);
          rates.q_water_injected.push_back(to_stb_per_day(q));
        } else {
          const double total = -q;
          const double fw = fluids.water_fraction(s.sw[c]);
          const double qw = fw * total;
          const double qo = total - qw;
          water_net[c] -= qw;
          produced_water += qw * dt;
          produced_oil += qo * dt;
          well.cum_water_produced += qw * dt;
          well.cum_oil += qo * dt;
          rates.q_oil.push_back(to_stb_per_day(qo));
          rates.q_water_produced.push_back(to_stb_per_day(qw));
          rates.q_water_injected.push_back(0.0);
        }
      }
      for (int c = 0; c < n_cells; ++c) {
        const double next = s.sw[c] + dt * water_net[c] / pore[c];
        if (!(next >= lo - kBoundTol && next <= hi + kBoundTol)) {
          throw NumericalError("water saturation " + std::to_string(next) + " left [" +
                               std::to_string(lo) + ", " + std::to_string(hi) + "] at cell " +
                               std::to_string(c));
        }
        s.sw[c] = next;
      }
      report.dt.push_back(dt_days);
      report.t_end.push_back(sub + 1 == n_sub ? step_end
                                              : step_start + dt_days * static_cast<double>(sub + 1));
    }
    substeps_total += n_sub;
    s.time = step_end;
  }

  double stored = 0.0;
  double total_pore = 0.0;
  for (int c = 0; c < n_cells; ++c) {
    stored += pore[c] * (s.sw[c] - sw_start[c]);
    total_pore += pore[c];
  }
  // Round-off flows (a lone well in a closed box) are measured against a
  // millionth of the pore volume instead of themselves.
  const double scale = std::max(injected + produced_water + produced_oil, 1e-6 * total_pore);
  {
    const double water_err = std::abs(injected - produced_water - stored);
    const double oil_err = std::abs(stored - produced_oil);
    report.volume_balance_error = std::max(water_err, oil_err) / scale;
  }
  return out;
}

}  // namespace fieldev
