#pragma once

#include <filesystem>
#include <string>

#include "fieldev/fdenv.hpp"
#include "fieldev/nn/network.hpp"
#include "fieldev/ppo.hpp"
#include "fieldev/psomads.hpp"

namespace fieldev {

// Everything a run needs. Only the geomodel source has no default.
struct RunConfig {
  std::string geomodel_source;  // "lognormal" or "file"
  std::filesystem::path geomodel_path;
  GridGeometry grid;
  LognormalParams lognormal;

  FluidProps fluids;
  WellSettings wells;
  EconParams econ;
  TimeStepping stepping;
  int stages = 5;
  double stage_length = 150.0;
  int max_wells_per_type = 0;
  PressureNormalization pressure_normalization = PressureNormalization::FixedBounds;
  bool use_restart = true;

  nn::NetworkSpec network;
  std::uint64_t network_seed = 1;

  PPOConfig ppo;
  int iterations = 10;
  int checkpoint_every = 1;

  HybridConfig psomads;
  int runs = 1;

  std::filesystem::path output_dir = "fieldev-out";

  // Loads or generates the geological model. Throws ConfigError / LoadError.
  EnvConfig make_env() const;
};

// Strict INI reader: unknown sections or keys and malformed values are
// ConfigErrors naming the offending key. Relative paths resolve against the
// file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});

// Every key with its effective value, in a form load_run_config accepts.
std::string resolved_config(const RunConfig& config);

}  // namespace fieldev
