#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "membridge/error.hpp"

namespace membridge::detail {

// Little-endian encoders shared by the binary formats.
class ByteWriter {
 public:
  template <typename U>
  void put_uint(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i)
      bytes_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
  void put_f32(float v) { put_uint(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put_uint(std::bit_cast<std::uint64_t>(v)); }
  void put_tag(const char (&tag)[4]) {
    for (char c : tag) bytes_.push_back(static_cast<std::uint8_t>(c));
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool exhausted() const noexcept { return pos_ == bytes_.size(); }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  template <typename U>
  U get_uint() {
    need(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      value |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return value;
  }
  float get_f32() { return std::bit_cast<float>(get_uint<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get_uint<std::uint64_t>()); }
  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  void need(std::size_t n) const {
    if (remaining() < n) fail(ErrorKind::Format, "truncated");
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace membridge::detail
