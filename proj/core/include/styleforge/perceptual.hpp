#pragma once

// Frozen feature extractor providing the four perceptual tap activations.
// Stages are [conv 3x3 + ReLU] x k, separated by 2x2 max pooling; the tap of
// each stage is its last ReLU. Convolutions use zero padding, as in VGG16.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "styleforge/autograd.hpp"
#include "styleforge/ops.hpp"
#include "styleforge/tensor.hpp"

namespace styleforge {

inline constexpr std::array<std::string_view, 4> kTapLabels = {"relu1_2", "relu2_2", "relu3_3",
                                                               "relu4_3"};
inline constexpr std::string_view kContentTap = "relu2_2";

using TapMap = std::map<std::string, Tensor, std::less<>>;
using TapVars = std::map<std::string, Var, std::less<>>;

struct ExtractorTopology {
  std::array<int, 4> widths;
  std::array<int, 4> convs_per_stage;

  bool operator==(const ExtractorTopology&) const = default;
};

/// 8/16/32/64 channels, two convolutions per stage.
ExtractorTopology tiny_topology();
/// VGG16 through conv4_3: 64/128/256/512 channels, 2/2/3/3 convolutions.
ExtractorTopology vgg16_topology();

struct FeatureExtractor {
  ExtractorTopology topology;
  /// stages[s][i] is conv{s+1}_{i+1}.
  std::vector<std::vector<ConvSpec>> stages;
  std::array<float, 3> mean = {0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev = {0.229f, 0.224f, 0.225f};

  std::array<int, 4> tap_channels() const { return topology.widths; }
  bool operator==(const FeatureExtractor&) const = default;
};

/// Glorot-uniform weights from a SplitMix64 stream, zero biases.
FeatureExtractor tiny_extractor(std::uint64_t seed);

/// Throws InvalidArgument unless h and w are divisible by 8 and c == 3.
TapMap extract(const FeatureExtractor& extractor, const Tensor& image);

ParameterBinding<float> bind_parameters(Tape<float>& tape, const FeatureExtractor& extractor);

/// Differentiable w.r.t. the image only; the extractor is bound frozen.
TapVars extract(Tape<float>& tape, const ParameterBinding<float>& params,
                const FeatureExtractor& extractor, Var image);

/// Tensors are stored as "convX_Y.weight" (rank 4) and "convX_Y.bias" (rank 1).
void save_extractor(const FeatureExtractor& extractor, const std::filesystem::path& path);

/// Throws ParseError(missing_tensor) naming the first absent tensor, or
/// ParseError(shape_mismatch) for a tensor that does not fit the topology.
FeatureExtractor load_extractor(const std::filesystem::path& path,
                                const ExtractorTopology& topology);

FeatureExtractor load_vgg16(const std::filesystem::path& path);

}  // namespace styleforge
