#pragma once

// Binary netpbm codecs: P6 colour frames and P5 grey planes, maxval 255 only.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "styleforge/tensor.hpp"

namespace styleforge {

/// (1, 3, h, w) tensor with values in [0, 1].
Tensor read_ppm(std::span<const std::byte> bytes);

/// Clamps to [0, 1] and quantizes with round-half-up; t must be (1, 3, h, w).
std::vector<std::byte> write_ppm(const Tensor& t);

Tensor read_ppm_file(const std::filesystem::path& path);
void write_ppm_file(const std::filesystem::path& path, const Tensor& t);

struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  ///< row-major

  bool operator==(const GrayImage&) const = default;
};

GrayImage read_pgm(std::span<const std::byte> bytes);
std::vector<std::byte> write_pgm(const GrayImage& image);

/// 8-bit value of a [0, 1] sample: clamp, scale by 255, round half up.
std::uint8_t quantize_unit(float v) noexcept;

}  // namespace styleforge
