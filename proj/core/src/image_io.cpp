#include "styleforge/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "styleforge/error.hpp"
#include "styleforge/io.hpp"

namespace styleforge {

namespace {

struct PnmHeader {
  int width = 0;
  int height = 0;
  std::size_t data_offset = 0;
};

PnmHeader parse_header(std::span<const std::byte> bytes, char kind) {
  const char* format = kind == '6' ? "ppm" : "pgm";
  auto at = [&](std::size_t i) { return static_cast<char>(bytes[i]); };
  if (bytes.size() < 2 || at(0) != 'P' || at(1) != kind) {
    throw ParseError(ParseErrc::bad_magic, std::string(format) + ": expected \"P" + kind + "\"");
  }
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      const char c = at(pos);
      if (c == '#') {
        while (pos < bytes.size() && at(pos) != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* field) {
    skip_space();
    if (pos >= bytes.size()) {
      throw ParseError(ParseErrc::truncated, std::string(format) + ": header ends before " + field);
    }
    if (!std::isdigit(static_cast<unsigned char>(at(pos)))) {
      throw ParseError(ParseErrc::malformed, std::string(format) + ": bad " + field);
    }
    long long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(at(pos)))) {
      v = v * 10 + (at(pos) - '0');
      if (v > (1 << 24)) throw ParseError(ParseErrc::bad_dimensions, std::string(format) + ": " + field + " too large");
      ++pos;
    }
    return static_cast<int>(v);
  };
  PnmHeader h;
  h.width = number("width");
  h.height = number("height");
  const int maxval = number("maxval");
  if (h.width < 1 || h.height < 1) {
    throw ParseError(ParseErrc::bad_dimensions, std::string(format) + ": zero extent");
  }
  if (maxval != 255) {
    throw ParseError(ParseErrc::unsupported_maxval,
                     std::string(format) + ": maxval " + std::to_string(maxval) + " (only 255)");
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(at(pos)))) {
    throw ParseError(ParseErrc::truncated, std::string(format) + ": missing raster separator");
  }
  h.data_offset = pos + 1;
  return h;
}

void append_header(std::vector<std::byte>& out, char kind, int width, int height) {
  const std::string header =
      std::string("P") + kind + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (char c : header) out.push_back(static_cast<std::byte>(c));
}

}  // namespace

std::uint8_t quantize_unit(float v) noexcept {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

Tensor read_ppm(std::span<const std::byte> bytes) {
  const PnmHeader h = parse_header(bytes, '6');
  const std::size_t plane = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() - h.data_offset < plane * 3) {
    throw ParseError(ParseErrc::truncated, "ppm: raster has " +
                                               std::to_string(bytes.size() - h.data_offset) +
                                               " bytes, need " + std::to_string(plane * 3));
  }
  Tensor t(1, 3, h.height, h.width);
  const std::byte* src = bytes.data() + h.data_offset;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      t.plane(0, c)[i] = static_cast<float>(std::to_integer<int>(src[3 * i + c])) / 255.0f;
    }
  }
  return t;
}

std::vector<std::byte> write_ppm(const Tensor& t) {
  if (t.n() != 1 || t.c() != 3) {
    throw InvalidArgument("write_ppm: expected a (1, 3, h, w) tensor, got " + t.shape().str());
  }
  std::vector<std::byte> out;
  append_header(out, '6', t.w(), t.h());
  const std::size_t plane = t.shape().plane();
  const std::size_t start = out.size();
  out.resize(start + plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      out[start + 3 * i + c] = static_cast<std::byte>(quantize_unit(t.plane(0, c)[i]));
    }
  }
  return out;
}

Tensor read_ppm_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return read_ppm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(e.code(), path.string() + ": " + e.what());
  }
}

void write_ppm_file(const std::filesystem::path& path, const Tensor& t) {
  write_bytes(path, write_ppm(t));
}

GrayImage read_pgm(std::span<const std::byte> bytes) {
  const PnmHeader h = parse_header(bytes, '5');
  const std::size_t plane = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() - h.data_offset < plane) {
    throw ParseError(ParseErrc::truncated, "pgm: raster has " +
                                               std::to_string(bytes.size() - h.data_offset) +
                                               " bytes, need " + std::to_string(plane));
  }
  GrayImage g;
  g.height = h.height;
  g.width = h.width;
  g.pixels.resize(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    g.pixels[i] = std::to_integer<std::uint8_t>(bytes[h.data_offset + i]);
  }
  return g;
}

std::vector<std::byte> write_pgm(const GrayImage& image) {
  if (image.height < 1 || image.width < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.height) * image.width) {
    throw InvalidArgument("write_pgm: pixel count does not match extents");
  }
  std::vector<std::byte> out;
  append_header(out, '5', image.width, image.height);
  for (std::uint8_t p : image.pixels) out.push_back(static_cast<std::byte>(p));
  return out;
}

}  // namespace styleforge
