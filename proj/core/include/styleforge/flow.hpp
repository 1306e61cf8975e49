#pragma once

// Optical-flow fields, occlusion masks, bilinear backward warping, and a
// synthetic rigid-motion sequence with exact ground truth.
//
// Convention for warping: a FlowField passed to warp() lives on the grid of
// the frame being reconstructed, and flow(p) points to where p is found in the
// source frame: warp(x, flow)(p) = x(p + flow(p)). For a consecutive pair
// (t-1, t) that is the t -> t-1 field; the t-1 -> t field is its forward
// counterpart and the pair of both feeds occlusion_mask().

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "styleforge/autograd.hpp"
#include "styleforge/image_io.hpp"
#include "styleforge/tensor.hpp"

namespace styleforge {

class FlowField {
 public:
  FlowField() = default;
  FlowField(int height, int width, float u = 0.0f, float v = 0.0f);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  float u(int y, int x) const noexcept { return uv_[index(y, x)]; }
  float v(int y, int x) const noexcept { return uv_[index(y, x) + 1]; }
  void set(int y, int x, float u, float v) noexcept {
    uv_[index(y, x)] = u;
    uv_[index(y, x) + 1] = v;
  }
  /// Interleaved (u, v) pairs, row-major.
  std::span<const float> interleaved() const noexcept { return uv_; }
  std::span<float> interleaved() noexcept { return uv_; }

  /// Finite values with |u| < width and |v| < height.
  bool is_sane() const noexcept;

  bool operator==(const FlowField&) const = default;

 private:
  std::size_t index(int y, int x) const noexcept {
    return 2 * (static_cast<std::size_t>(y) * width_ + x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> uv_;
};

class OcclusionMask {
 public:
  OcclusionMask() = default;
  /// All pixels traceable (or all untraceable).
  OcclusionMask(int height, int width, bool traceable = true);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  bool traceable(int y, int x) const noexcept { return values_[index(y, x)] != 0; }
  void set(int y, int x, bool traceable) noexcept { values_[index(y, x)] = traceable ? 1 : 0; }
  std::size_t traceable_count() const noexcept;
  /// (1, 1, h, w) tensor of 0/1.
  template <typename T = float>
  BasicTensor<T> as_tensor() const;

  bool operator==(const OcclusionMask&) const = default;

 private:
  std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> values_;
};

/// Middlebury .flo: "PIEH" tag (f32 202021.25), i32 width, i32 height,
/// interleaved f32 (u, v), all little-endian.
FlowField read_flo(std::span<const std::byte> bytes);
std::vector<std::byte> write_flo(const FlowField& flow);
FlowField read_flo_file(const std::filesystem::path& path);
void write_flo_file(const std::filesystem::path& path, const FlowField& flow);

/// P5 PGM, 255 = traceable, 0 = untraceable (values >= 128 read as traceable).
OcclusionMask read_mask_pgm(std::span<const std::byte> bytes);
std::vector<std::byte> write_mask_pgm(const OcclusionMask& mask);

/// Bilinear backward warp with sampling coordinates clamped to the frame.
template <typename T>
BasicTensor<T> warp(const BasicTensor<T>& x, const FlowField& flow);

/// Accumulates the adjoint of warp() into grad_x.
template <typename T>
void warp_backward(const FlowField& flow, const BasicTensor<T>& grad_out, BasicTensor<T>& grad_x);

template <typename T>
Var warp(Tape<T>& tape, Var x, const FlowField& flow);

/// Forward-backward consistency: p is untraceable when p + a(p) leaves the
/// frame or |a(p) + b(q)|^2 > 0.01 (|a(p)|^2 + |b(q)|^2) + 0.5 with
/// q = p + a(p) and b sampled bilinearly. The mask lives on a's grid.
OcclusionMask occlusion_mask(const FlowField& a, const FlowField& b);

/// Block-average of displacements divided by the factor.
FlowField downsample_flow(const FlowField& flow, int factor);
/// A block stays traceable only if every pixel in it is.
OcclusionMask downsample_mask(const OcclusionMask& mask, int factor);

struct SyntheticSequence {
  std::vector<Tensor> frames;  ///< (1, 3, h, w), values in [0, 1]
  /// forward_flows[t]: frame t -> t+1 on frame t's grid.
  std::vector<FlowField> forward_flows;
  /// backward_flows[t]: frame t+1 -> t on frame t+1's grid (the warp flow).
  std::vector<FlowField> backward_flows;
  /// masks[t]: traceability of frame t+1 pixels back into frame t.
  std::vector<OcclusionMask> masks;
};

/// A smooth random texture patch translating by (u, v) pixels per frame over a
/// static smooth background. Requires |u| * length < w and |v| * length < h.
SyntheticSequence synth_sequence(std::uint64_t seed, int length, int height, int width,
                                 int velocity_u, int velocity_v);

}  // namespace styleforge
