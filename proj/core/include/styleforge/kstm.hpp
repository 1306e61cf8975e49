#pragma once

// KSTM tensor container, little-endian:
//
//   "KSTM" | u32 version | f32 alpha | f32 beta | u8 variant | u32 tensor_count
//   per tensor: u16 name_len | name | u8 rank | u32 dims[rank] | f32 payload
//   u32 CRC-32 of every byte after the magic
//
// Model files, optimizer sidecars, and converted VGG16 weights all use it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "styleforge/tensor.hpp"

namespace styleforge::kstm {

inline constexpr std::uint32_t kVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  bool operator==(const NamedTensor&) const = default;
};

struct Container {
  float alpha = 0.0f;
  float beta = 0.0f;
  std::uint8_t variant = 0;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(std::string_view name) const;
  /// Throws ParseError(missing_tensor) naming the tensor.
  const NamedTensor& get(std::string_view name) const;
  bool operator==(const Container&) const = default;
};

std::vector<std::byte> encode(const Container& container);

/// Errors: bad_magic, unsupported_version, truncated, trailing_data,
/// checksum_mismatch, malformed (rank 0, payload size overflow).
Container decode(std::span<const std::byte> bytes);

void write_file(const std::filesystem::path& path, const Container& container);
Container read_file(const std::filesystem::path& path);

/// Named entry from a tensor; rank is 4 unless `rank` narrows it (1 keeps
/// only the channel extent, as used for bias and norm vectors).
NamedTensor from_tensor(std::string name, const Tensor& t, int rank = 4);

/// Reshapes an entry into `expected`; throws ParseError(shape_mismatch) when
/// element counts or the stored extents disagree.
Tensor to_tensor(const NamedTensor& entry, const Shape& expected);

std::uint32_t crc32(std::span<const std::byte> bytes);

}  // namespace styleforge::kstm
