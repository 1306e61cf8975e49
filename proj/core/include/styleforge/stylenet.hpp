#pragma once

// The width/depth scalable encoder-decoder transformation network.
//
//   conv(3->w1, s1) IN ReLU
//   conv(w1->w2, s2) IN ReLU
//   conv(w2->w3, s2) IN ReLU            -> encoded features
//   R x residual(w3)
//   up2, conv(w3->w2) IN ReLU
//   up2, conv(w2->w1) IN ReLU
//   conv(w1->3)                          (no norm, no activation)
//
// with w = round(alpha * {32, 48, 64}) and R = round(4 * beta).

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "styleforge/autograd.hpp"
#include "styleforge/ops.hpp"
#include "styleforge/tensor.hpp"

namespace styleforge {

enum class Variant : std::uint8_t {
  paper = 0,      ///< all 3x3 kernels, round(4 * beta) residual blocks
  legacy_v1 = 1,  ///< 9x9 first/last kernels, 5 residual blocks at beta = 1
};

std::string_view to_string(Variant v) noexcept;
/// Accepts "paper" and "legacy_v1"; throws ConfigError otherwise.
Variant parse_variant(std::string_view text);

struct ArchConfig {
  float alpha = 1.0f;  ///< width multiplier in (0, 1]
  float beta = 1.0f;   ///< depth multiplier in (0, 1]
  Variant variant = Variant::paper;

  /// Filter widths {w1, w2, w3}.
  std::array<int, 3> widths() const;
  int residual_blocks() const;
  /// Kernel of the first and last convolution.
  int end_kernel() const noexcept { return variant == Variant::legacy_v1 ? 9 : 3; }
  /// Throws ConfigError for alpha/beta outside (0, 1] or a zero-width layer.
  void validate() const;
  std::string label() const;

  bool operator==(const ArchConfig&) const = default;
};

/// The fifteen configurations of the size study, in table order: beta = 1
/// (legacy_v1), then 0.75 and 0.5 (variant paper), alpha descending within each.
std::vector<ArchConfig> size_study_configs();

struct NormParams {
  Tensor gamma;  ///< (1, c, 1, 1)
  Tensor beta;   ///< (1, c, 1, 1)

  bool operator==(const NormParams&) const = default;
};

struct ConvNormLayer {
  ConvSpec conv;
  NormParams norm;

  bool operator==(const ConvNormLayer&) const = default;
};

/// x + IN(conv(ReLU(IN(conv(x))))), no activation after the sum.
struct ResidualBlock {
  ConvNormLayer first;
  ConvNormLayer second;

  bool operator==(const ResidualBlock&) const = default;
};

struct NamedParam {
  std::string name;
  Tensor* tensor;
  int rank;  ///< storage rank in the model file (4 for conv weights, else 1)
};

struct NamedConstParam {
  std::string name;
  const Tensor* tensor;
  int rank;
};

struct StyleNetModel {
  ArchConfig config;
  std::array<ConvNormLayer, 3> encoder;
  std::vector<ResidualBlock> residual;
  std::array<ConvNormLayer, 2> decoder;
  ConvSpec output;

  /// Every learnable tensor, in initialization and serialization order.
  std::vector<NamedParam> parameters();
  std::vector<NamedConstParam> parameters() const;
  /// Number of learnable scalars actually held by this model.
  std::size_t allocated_scalars() const;

  bool operator==(const StyleNetModel&) const = default;
};

/// Weights uniform in [-s, s], s = sqrt(6 / (fan_in + fan_out)), drawn from a
/// SplitMix64 stream seeded with init_seed in parameters() order; gamma = 1,
/// beta and biases = 0.
StyleNetModel build(const ArchConfig& config, std::uint64_t init_seed);

struct StyleNetOutput {
  Tensor image;     ///< raw (unclamped) output, (n, 3, h, w)
  Tensor features;  ///< encoder output, (n, w3, h/4, w/4)
};

/// h and w must be divisible by 4 (InvalidArgument otherwise).
StyleNetOutput forward(const StyleNetModel& model, const Tensor& frame);

/// forward() followed by clamping to [0, 1].
Tensor stylize(const StyleNetModel& model, const Tensor& frame);

struct StyleNetVars {
  Var image;
  Var features;
};

/// All model parameters as tape leaves.
ParameterBinding<float> bind_parameters(Tape<float>& tape, const StyleNetModel& model,
                                        bool requires_grad);

/// Differentiable forward pass; `params` must come from bind_parameters on
/// the same tape and model.
StyleNetVars forward(Tape<float>& tape, const ParameterBinding<float>& params,
                     const StyleNetModel& model, Var frame);

/// Learnable-scalar count derived layer by layer from the configuration
/// alone; build() is not involved.
std::size_t param_count(const ArchConfig& config);

/// The ReCoNet baseline: widths 48/96/192, 4 residual blocks, 9x9 end kernels.
std::size_t reconet_reference_count();

struct SizeEstimate {
  std::size_t bytes = 0;
  double megabytes = 0.0;  ///< bytes / 2^20
};

/// 32-bit weights: bytes = 4 * param_count.
SizeEstimate size_estimate(const ArchConfig& config);
SizeEstimate size_estimate_for_count(std::size_t params);

std::vector<std::byte> encode_model(const StyleNetModel& model);
/// Throws ParseError (bad magic, version, truncation, checksum, missing or
/// mis-shaped tensors) or ConfigError for an invalid stored configuration.
StyleNetModel decode_model(std::span<const std::byte> bytes);

void save(const StyleNetModel& model, const std::filesystem::path& path);
StyleNetModel load(const std::filesystem::path& path);

}  // namespace styleforge
