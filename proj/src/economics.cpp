#include "fieldev/economics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fieldev/errors.hpp"

namespace fieldev {

void EconParams::validate() const {
  if (!(oil_price >= 0.0) || !(water_production_cost >= 0.0) ||
      !(water_injection_cost >= 0.0) || !(well_cost >= 0.0)) {
    throw InvalidArgument("prices and costs must be non-negative");
  }
  if (!(discount_rate >= 0.0)) throw InvalidArgument("discount rate must be non-negative");
}

double discount_factor(double days, double annual_rate) {
  return std::pow(1.0 + annual_rate, -days / 365.0);
}

double stage_npv(const StageReport& report, std::span<const Well> drilled,
                 const EconParams& econ) {
  econ.validate();
  const std::size_t steps = report.steps();
  if (report.t_end.size() != steps) throw InvalidArgument("report dt/t_end length mismatch");
  for (const auto& w : report.wells) {
    if (w.q_oil.size() != steps || w.q_water_produced.size() != steps ||
        w.q_water_injected.size() != steps) {
      throw InvalidArgument("report rates for well " + std::to_string(w.well) +
                            " do not cover every step");
    }
  }

  double value = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    if (!(report.dt[k] >= 0.0)) throw InvalidArgument("negative timestep in report");
    double cash = 0.0;
    for (const auto& w : report.wells) {
      const double qo = w.q_oil[k];
      const double qpw = w.q_water_produced[k];
      const double qiw = w.q_water_injected[k];
      if (qo < 0.0 || qpw < 0.0 || qiw < 0.0) {
        throw InvalidArgument("negative rate for well " + std::to_string(w.well));
      }
      if (w.kind == WellKind::Producer) {
        cash += econ.oil_price * qo - econ.water_production_cost * qpw;
      } else {
        cash -= econ.water_injection_cost * qiw;
      }
    }
    value += cash * report.dt[k] * discount_factor(report.t_end[k], econ.discount_rate);
  }
  for (const auto& w : drilled) {
    value -= econ.well_cost * discount_factor(w.drilled_at, econ.discount_rate);
  }
  return value;
}

double episode_npv(std::span<const double> stage_values) {
  double total = 0.0;
  for (double v : stage_values) total += v;
  return total;
}

StageReport concat_reports(std::span<const StageReport> reports) {
  StageReport out;
  int max_well = -1;
  for (const auto& r : reports) {
    for (const auto& w : r.wells) max_well = std::max(max_well, w.well);
  }
  out.wells.resize(static_cast<std::size_t>(max_well + 1));
  for (int w = 0; w <= max_well; ++w) out.wells[w].well = w;

  for (const auto& r : reports) {
    const std::size_t before = out.dt.size();
    out.dt.insert(out.dt.end(), r.dt.begin(), r.dt.end());
    out.t_end.insert(out.t_end.end(), r.t_end.begin(), r.t_end.end());
    out.volume_balance_error = std::max(out.volume_balance_error, r.volume_balance_error);
    out.max_pressure_residual = std::max(out.max_pressure_residual, r.max_pressure_residual);
    out.pressure_solves += r.pressure_solves;
    for (auto& dst : out.wells) {
      dst.q_oil.resize(before, 0.0);
      dst.q_water_produced.resize(before, 0.0);
      dst.q_water_injected.resize(before, 0.0);
    }
    for (const auto& src : r.wells) {
      auto& dst = out.wells[src.well];
      dst.kind = src.kind;
      dst.q_oil.insert(dst.q_oil.end(), src.q_oil.begin(), src.q_oil.end());
      dst.q_water_produced.insert(dst.q_water_produced.end(), src.q_water_produced.begin(),
                                  src.q_water_produced.end());
      dst.q_water_injected.insert(dst.q_water_injected.end(), src.q_water_injected.begin(),
                                  src.q_water_injected.end());
    }
  }
  for (auto& dst : out.wells) {
    dst.q_oil.resize(out.dt.size(), 0.0);
    dst.q_water_produced.resize(out.dt.size(), 0.0);
    dst.q_water_injected.resize(out.dt.size(), 0.0);
  }
  return out;
}

}  // namespace fieldev
