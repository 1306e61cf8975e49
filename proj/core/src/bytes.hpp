#pragma once

// Little-endian byte stream helpers shared by the binary codecs.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "styleforge/error.hpp"

namespace styleforge::detail {

static_assert(std::endian::native == std::endian::little,
              "binary codecs assume a little-endian host");

class ByteWriter {
 public:
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::byte*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void put_bytes(std::span<const std::byte> data) {
    bytes_.insert(bytes_.end(), data.begin(), data.end());
  }

  void put_string(const std::string& s) {
    put_bytes(std::as_bytes(std::span(s.data(), s.size())));
  }

  template <typename T>
  void put_array(std::span<const T> values) {
    put_bytes(std::as_bytes(values));
  }

  std::vector<std::byte>& bytes() noexcept { return bytes_; }

 private:
  std::vector<std::byte> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::byte> bytes, const char* format)
      : bytes_(bytes), format_(format) {}

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }

  std::span<const std::byte> take(std::size_t count) {
    if (count > remaining()) {
      throw ParseError(ParseErrc::truncated,
                       std::string(format_) + ": needed " + std::to_string(count) +
                           " more bytes at offset " + std::to_string(pos_) + ", have " +
                           std::to_string(remaining()));
    }
    auto out = bytes_.subspan(pos_, count);
    pos_ += count;
    return out;
  }

  template <typename T>
  void get_array(std::span<T> out) {
    auto src = take(out.size_bytes());
    std::memcpy(out.data(), src.data(), src.size());
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

 private:
  std::span<const std::byte> bytes_;
  const char* format_;
  std::size_t pos_ = 0;
};

}  // namespace styleforge::detail
