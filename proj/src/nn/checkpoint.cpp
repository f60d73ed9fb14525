#include "fieldev/nn/checkpoint.hpp"

#include <sstream>

#include "fieldev/binary_io.hpp"
#include "fieldev/errors.hpp"

namespace fieldev::nn {

namespace {

constexpr std::uint32_t kMagic = 0x4b434446;  // "FDCK"
constexpr std::uint32_t kVersion = 1;

void put_set(ByteWriter& w, const ParamSet& set) {
  for (const auto& t : set.tensors) w.put_f64s(t.values());
}

ParamSet get_set(ByteReader& r, const Network& net) {
  ParamSet p = net.zero_params();
  for (auto& t : p.tensors) t.storage() = r.get_f64s(t.size());
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.put_u32(kMagic);
  w.put_u32(kVersion);
  w.put_u64(ckpt.spec_hash);
  w.put_u64(ckpt.iteration);
  w.put_u64(ckpt.sims_total);
  w.put_u64(ckpt.adam.step);
  w.put_u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& t : ckpt.params.tensors) w.put_u64(t.size());
  put_set(w, ckpt.params);
  put_set(w, ckpt.adam.m);
  put_set(w, ckpt.adam.v);
  w.seal();
  return w.release();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const Network& net) {
  const auto payload = verify_sealed(bytes, "checkpoint");
  ByteReader r(payload);
  if (r.get_u32() != kMagic) throw IntegrityError("checkpoint: bad magic number");
  const auto version = r.get_u32();
  if (version != kVersion)
    throw IntegrityError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  c.spec_hash = r.get_u64();
  if (c.spec_hash != net.spec_hash()) {
    std::ostringstream os;
    os << "checkpoint: network spec hash " << std::hex << c.spec_hash
       << " does not match the configured network (" << net.spec_hash() << ")";
    throw IntegrityError(os.str());
  }
  c.iteration = r.get_u64();
  c.sims_total = r.get_u64();
  const auto step = r.get_u64();
  const auto count = r.get_u32();
  if (count != net.param_shapes().size())
    throw IntegrityError("checkpoint: parameter count mismatch");
  for (const auto& s : net.param_shapes())
    if (r.get_u64() != shape_size(s)) throw IntegrityError("checkpoint: parameter size mismatch");
  c.params = get_set(r, net);
  c.adam.m = get_set(r, net);
  c.adam.v = get_set(r, net);
  c.adam.step = step;
  if (r.remaining() != 0) throw IntegrityError("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Network& net) {
  return decode_checkpoint(read_file(path), net);
}

}  // namespace fieldev::nn
