#include "g5/serialize.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace g5 {

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = seed ^ 0xffffffffu;
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < len; ++i)
    c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

// ---- writer -----------------------------------------------------------------

void BinaryWriter::u8(std::uint8_t v) { buf_.push_back(v); }

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back((v >> (8 * i)) & 0xffu);
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back((v >> (8 * i)) & 0xffu);
}

void BinaryWriter::i64(std::int64_t v) {
  u64(static_cast<std::uint64_t>(v));
}

void BinaryWriter::f64(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  u64(bits);
}

void BinaryWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void BinaryWriter::doubles(const std::vector<double>& v) {
  for (double x : v) f64(x);
}

void BinaryWriter::u32s(const std::vector<std::uint32_t>& v) {
  for (std::uint32_t x : v) u32(x);
}

void BinaryWriter::tensor(const Tensor& t) {
  u32(static_cast<std::uint32_t>(t.shape.size()));
  for (std::size_t d : t.shape) u64(d);
  doubles(t.data);
}

// ---- reader -----------------------------------------------------------------

void BinaryReader::need(std::size_t n) {
  if (pos_ + n > len_)
    throw IntegrityError("binary payload truncated");
}

std::uint8_t BinaryReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
  return v;
}

std::int64_t BinaryReader::i64() {
  return static_cast<std::int64_t>(u64());
}

double BinaryReader::f64() {
  const std::uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string BinaryReader::str() {
  const std::uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
  pos_ += n;
  return s;
}

void BinaryReader::doubles(std::vector<double>& out, std::size_t count) {
  out.resize(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = f64();
}

void BinaryReader::u32s(std::vector<std::uint32_t>& out, std::size_t count) {
  out.resize(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = u32();
}

Tensor BinaryReader::tensor() {
  const std::uint32_t rank = u32();
  if (rank == 0 || rank > 8)
    throw IntegrityError("tensor rank out of range");
  std::vector<std::size_t> shape(rank);
  std::size_t numel = 1;
  for (auto& d : shape) {
    d = static_cast<std::size_t>(u64());
    if (d == 0) throw IntegrityError("tensor dimension is zero");
    numel *= d;
  }
  Tensor t = Tensor::zeros(shape);
  doubles(t.data, numel);
  return t;
}

// ---- envelope ---------------------------------------------------------------

void write_envelope(const std::string& path, const char magic[4],
                    std::uint32_t version,
                    const std::vector<std::uint8_t>& payload) {
  BinaryWriter head;
  head.u32(version);
  head.u32(crc32(payload.data(), payload.size()));
  head.u64(payload.size());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(magic, 4);
  f.write(reinterpret_cast<const char*>(head.bytes().data()),
          static_cast<std::streamsize>(head.bytes().size()));
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  if (!f) throw IoError("write failed: " + path);
}

std::vector<std::uint8_t> read_envelope(const std::string& path,
                                        const char magic[4],
                                        std::uint32_t expected_version) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  if (raw.size() < 20) throw IntegrityError(path + ": file too short");
  if (std::memcmp(raw.data(), magic, 4) != 0)
    throw IntegrityError(path + ": bad magic");
  BinaryReader head(raw.data() + 4, 16);
  const std::uint32_t version = head.u32();
  const std::uint32_t crc = head.u32();
  const std::uint64_t len = head.u64();
  if (version != expected_version)
    throw VersionError(path + ": format version " + std::to_string(version) +
                       ", this build reads " +
                       std::to_string(expected_version));
  if (raw.size() != 20 + len)
    throw IntegrityError(path + ": truncated payload (" +
                         std::to_string(raw.size() - 20) + " of " +
                         std::to_string(len) + " bytes)");
  if (crc32(raw.data() + 20, len) != crc)
    throw IntegrityError(path + ": checksum mismatch");
  return {raw.begin() + 20, raw.end()};
}

}  // namespace g5
