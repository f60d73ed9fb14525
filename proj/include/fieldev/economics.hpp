#pragma once

#include <span>

#include "fieldev/simulator.hpp"

namespace fieldev {

struct EconParams {
  double oil_price = 55.0;              // $/STB
  double water_production_cost = 6.0;   // $/STB
  double water_injection_cost = 2.0;    // $/STB
  double well_cost = 25e6;              // $ per well
  double discount_rate = 0.08;          // per year

  void validate() const;
};

double discount_factor(double days, double annual_rate);

// Discounted cash flow of one report plus the discounted drilling cost of
// `drilled`. Report times are absolute, so stage values add up to the
// whole-episode value.
double stage_npv(const StageReport& report, std::span<const Well> drilled,
                 const EconParams& econ);

double episode_npv(std::span<const double> stage_values);

// Concatenates consecutive stage reports into one, aligning wells by their
// SimState position and zero-filling steps before a well existed.
StageReport concat_reports(std::span<const StageReport> reports);

}  // namespace fieldev
