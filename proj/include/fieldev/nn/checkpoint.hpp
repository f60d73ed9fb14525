#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "fieldev/nn/adam.hpp"
#include "fieldev/nn/network.hpp"

namespace fieldev::nn {

struct Checkpoint {
  std::uint64_t spec_hash = 0;
  ParamSet params;
  AdamState adam;
  std::uint64_t iteration = 0;  // completed training iterations
  std::uint64_t sims_total = 0;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Refuses data whose spec hash differs from `net` (IntegrityError), and
// corrupt or truncated data (IntegrityError).
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const Network& net);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path, const Network& net);

}  // namespace fieldev::nn
