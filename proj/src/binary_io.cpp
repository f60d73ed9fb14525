#include "fieldev/binary_io.hpp"

#include <boost/crc.hpp>

#include <fstream>
#include <iterator>

#include "fieldev/errors.hpp"

namespace fieldev {

void ByteWriter::put_u32(std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) bytes_.push_back(static_cast<std::uint8_t>(v >> s));
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int s = 0; s < 64; s += 8) bytes_.push_back(static_cast<std::uint8_t>(v >> s));
}

void ByteWriter::put_f64s(std::span<const double> values) {
  bytes_.reserve(bytes_.size() + 8 * values.size());
  for (double v : values) put_f64(v);
}

void ByteWriter::put_raw(std::span<const std::uint8_t> raw) {
  bytes_.insert(bytes_.end(), raw.begin(), raw.end());
}

void ByteWriter::seal() { put_u32(crc32(bytes_)); }

void ByteReader::require(std::size_t n) const {
  if (remaining() < n) {
    throw IntegrityError("truncated binary payload: need " + std::to_string(n) +
                         " bytes at offset " + std::to_string(pos_) + ", have " +
                         std::to_string(remaining()));
  }
}

std::uint8_t ByteReader::get_u8() {
  require(1);
  return bytes_[pos_++];
}

std::uint32_t ByteReader::get_u32() {
  require(4);
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * k);
  return v;
}

std::uint64_t ByteReader::get_u64() {
  require(8);
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * k);
  return v;
}

std::vector<double> ByteReader::get_f64s(std::size_t count) {
  require(8 * count);
  std::vector<double> out(count);
  for (auto& v : out) v = get_f64();
  return out;
}

std::vector<std::uint8_t> ByteReader::get_raw(std::size_t count) {
  require(count);
  std::vector<std::uint8_t> out(bytes_.begin() + pos_, bytes_.begin() + pos_ + count);
  pos_ += count;
  return out;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

std::span<const std::uint8_t> verify_sealed(std::span<const std::uint8_t> bytes,
                                            const std::string& what) {
  if (bytes.size() < 4) throw IntegrityError(what + ": payload too short for checksum");
  auto payload = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4));
  const std::uint32_t stored = tail.get_u32();
  const std::uint32_t actual = crc32(payload);
  if (stored != actual) {
    throw IntegrityError(what + ": checksum mismatch (stored " + std::to_string(stored) +
                         ", computed " + std::to_string(actual) + ")");
  }
  return payload;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  // Write-then-rename so an interrupted run never leaves a torn file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace fieldev
