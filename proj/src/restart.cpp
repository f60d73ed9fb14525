#include <cstring>

#include "fieldev/binary_io.hpp"
#include "fieldev/errors.hpp"
#include "fieldev/simulator.hpp"

namespace fieldev {

namespace {

constexpr std::uint32_t kTokenMagic = 0x54525346;  // "FSRT"
constexpr std::uint32_t kTokenVersion = 1;

}  // namespace

RestartToken snapshot(const SimState& state, const GridGeometry& geometry) {
  const auto n = static_cast<std::size_t>(geometry.cell_count());
  if (state.pressure.size() != n || state.sw.size() != n) {
    throw InvalidArgument("snapshot: state fields do not match grid " +
                          std::to_string(geometry.nx) + "x" + std::to_string(geometry.ny));
  }
  ByteWriter w;
  w.put_u32(kTokenMagic);
  w.put_u32(kTokenVersion);
  w.put_i32(geometry.nx);
  w.put_i32(geometry.ny);
  w.put_f64(state.time);
  w.put_u32(static_cast<std::uint32_t>(state.wells.size()));
  w.put_f64s(state.pressure);
  w.put_f64s(state.sw);
  for (const auto& well : state.wells) {
    w.put_u8(static_cast<std::uint8_t>(well.kind));
    w.put_i32(well.cell.i);
    w.put_i32(well.cell.j);
    w.put_f64(well.bhp);
    w.put_f64(well.well_index);
    w.put_f64(well.drilled_at);
    w.put_i32(well.stage);
    w.put_f64(well.cum_oil);
    w.put_f64(well.cum_water_produced);
    w.put_f64(well.cum_water_injected);
  }
  w.seal();
  return {w.release()};
}

SimState restore(const RestartToken& token) {
  ByteReader r(verify_sealed(token.bytes, "restart token"));
  if (r.get_u32() != kTokenMagic) throw IntegrityError("restart token: bad magic");
  const auto version = r.get_u32();
  if (version != kTokenVersion) {
    throw IntegrityError("restart token: unsupported version " + std::to_string(version));
  }
  const int nx = r.get_i32();
  const int ny = r.get_i32();
  if (nx < 2 || ny < 2) throw IntegrityError("restart token: bad grid size");
  SimState s;
  s.time = r.get_f64();
  const auto wells = r.get_u32();
  const auto n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  s.pressure = r.get_f64s(n);
  s.sw = r.get_f64s(n);
  s.wells.resize(wells);
  for (auto& well : s.wells) {
    const auto kind = r.get_u8();
    if (kind > 1) throw IntegrityError("restart token: bad well kind");
    well.kind = static_cast<WellKind>(kind);
    well.cell.i = r.get_i32();
    well.cell.j = r.get_i32();
    well.bhp = r.get_f64();
    well.well_index = r.get_f64();
    well.drilled_at = r.get_f64();
    well.stage = r.get_i32();
    well.cum_oil = r.get_f64();
    well.cum_water_produced = r.get_f64();
    well.cum_water_injected = r.get_f64();
  }
  if (r.remaining() != 0) throw IntegrityError("restart token: trailing bytes");
  return s;
}

void save_token(const RestartToken& token, const std::filesystem::path& path) {
  write_file(path, token.bytes);
}

RestartToken load_token(const std::filesystem::path& path) { return {read_file(path)}; }

}  // namespace fieldev
