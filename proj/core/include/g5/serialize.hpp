#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "g5/errors.hpp"
#include "g5/tensor.hpp"

namespace g5 {

std::uint32_t crc32(const void* data, std::size_t len,
                    std::uint32_t seed = 0);

// Little-endian binary payload builder.
class BinaryWriter {
 public:
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void str(const std::string& s);          // u32 length + bytes
  void doubles(const std::vector<double>& v);  // raw payload, count known
  void u32s(const std::vector<std::uint32_t>& v);
  void tensor(const Tensor& t);            // rank, dims, raw doubles

  const std::vector<std::uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class BinaryReader {
 public:
  BinaryReader(const std::uint8_t* data, std::size_t len)
      : data_(data), len_(len) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  std::string str();
  void doubles(std::vector<double>& out, std::size_t count);
  void u32s(std::vector<std::uint32_t>& out, std::size_t count);
  Tensor tensor();

  bool exhausted() const { return pos_ == len_; }

 private:
  const std::uint8_t* data_;
  std::size_t len_;
  std::size_t pos_ = 0;

  void need(std::size_t n);
};

// Envelope: 4-byte magic, u32 format version, u32 crc32 of the payload,
// u64 payload length, payload bytes.  Readers verify magic, version and
// checksum; truncation is an integrity error.
void write_envelope(const std::string& path, const char magic[4],
                    std::uint32_t version, const std::vector<std::uint8_t>& payload);

std::vector<std::uint8_t> read_envelope(const std::string& path,
                                        const char magic[4],
                                        std::uint32_t expected_version);

}  // namespace g5
