#pragma once

// Little-endian primitive encoding shared by the checkpoint and dataset formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>

#include "dbkd/errors.hpp"

namespace dbkd::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_bytes(std::string_view s) { out_.append(s); }

  const std::string& bytes() const { return out_; }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const char> bytes, std::string file_kind)
      : bytes_(bytes), kind_(std::move(file_kind)) {}

  template <typename T>
  T get(std::string_view region) {
    need(sizeof(T), region);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view get_bytes(std::size_t n, std::string_view region) {
    need(n, region);
    std::string_view s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, std::string_view region) const {
    if (remaining() < n) {
      throw FormatError("truncated " + kind_ + ": " + std::string(region) + " needs " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_) + ", only " + std::to_string(remaining()) +
                        " available");
    }
  }

 private:
  std::span<const char> bytes_;
  std::string kind_;
  std::size_t pos_ = 0;
};

}  // namespace dbkd::detail
