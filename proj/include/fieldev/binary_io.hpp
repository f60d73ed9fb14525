#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fieldev {

// Little-endian byte buffer writer used by restart tokens and checkpoints.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { bytes_.push_back(v); }
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_i32(std::int32_t v) { put_u32(static_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }
  void put_f64s(std::span<const double> values);
  void put_raw(std::span<const std::uint8_t> raw);

  // Appends the CRC-32 of everything written so far.
  void seal();

  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t> release() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t get_u8();
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  std::int32_t get_i32() { return static_cast<std::int32_t>(get_u32()); }
  double get_f64() { return std::bit_cast<double>(get_u64()); }
  std::vector<double> get_f64s(std::size_t count);
  std::vector<std::uint8_t> get_raw(std::size_t count);

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void require(std::size_t n) const;

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

// Verifies the trailing CRC-32 written by ByteWriter::seal and returns the
// payload without it. Throws IntegrityError on mismatch.
std::span<const std::uint8_t> verify_sealed(std::span<const std::uint8_t> bytes,
                                            const std::string& what);

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// 64-bit FNV-1a, used for configuration fingerprints.
std::uint64_t fnv1a64(std::string_view text);

// SplitMix64 finalizer; derives independent seeds from (base, index) pairs.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index);

}  // namespace fieldev
