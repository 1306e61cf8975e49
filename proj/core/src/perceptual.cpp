#include "styleforge/perceptual.hpp"

#include <cmath>

#include "styleforge/error.hpp"
#include "styleforge/kstm.hpp"

namespace styleforge {

ExtractorTopology tiny_topology() { return {{8, 16, 32, 64}, {2, 2, 2, 2}}; }

ExtractorTopology vgg16_topology() { return {{64, 128, 256, 512}, {2, 2, 3, 3}}; }

namespace {

FeatureExtractor allocate(const ExtractorTopology& topology) {
  FeatureExtractor ex;
  ex.topology = topology;
  int in = 3;
  for (std::size_t s = 0; s < topology.widths.size(); ++s) {
    std::vector<ConvSpec> stage;
    for (int i = 0; i < topology.convs_per_stage[s]; ++i) {
      stage.push_back(ConvSpec::zeros(in, topology.widths[s], 3, 1, Padding::zero));
      in = topology.widths[s];
    }
    ex.stages.push_back(std::move(stage));
  }
  return ex;
}

std::string conv_name(std::size_t stage, std::size_t index) {
  return "conv" + std::to_string(stage + 1) + "_" + std::to_string(index + 1);
}

void check_image(const Shape& s) {
  if (s.c != 3) throw InvalidArgument("extract: image must have 3 channels, got " + s.str());
  if (s.h % 8 != 0 || s.w % 8 != 0) {
    throw InvalidArgument("extract: height and width must be divisible by 8, got " + s.str());
  }
}

std::array<float, 3> inverse(const std::array<float, 3>& v) {
  return {1.0f / v[0], 1.0f / v[1], 1.0f / v[2]};
}

}  // namespace

FeatureExtractor tiny_extractor(std::uint64_t seed) {
  FeatureExtractor ex = allocate(tiny_topology());
  SplitMix64 rng(seed);
  for (auto& stage : ex.stages) {
    for (ConvSpec& conv : stage) {
      const double fan_in = static_cast<double>(conv.in_channels) * 9;
      const double fan_out = static_cast<double>(conv.out_channels) * 9;
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (float& v : conv.weight.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    }
  }
  return ex;
}

TapMap extract(const FeatureExtractor& extractor, const Tensor& image) {
  check_image(image.shape());
  Tensor x = image;
  const auto scale = inverse(extractor.stddev);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < 3; ++c)
      for (float& v : std::span(x.plane(n, c), x.shape().plane()))
        v = (v - extractor.mean[c]) * scale[c];
  TapMap taps;
  for (std::size_t s = 0; s < extractor.stages.size(); ++s) {
    if (s > 0) x = max_pool2(x);
    for (const ConvSpec& conv : extractor.stages[s]) x = relu(conv2d(x, conv));
    taps.emplace(std::string(kTapLabels[s]), x);
  }
  return taps;
}

ParameterBinding<float> bind_parameters(Tape<float>& tape, const FeatureExtractor& extractor) {
  std::vector<const Tensor*> tensors;
  for (const auto& stage : extractor.stages) {
    for (const ConvSpec& conv : stage) {
      tensors.push_back(&conv.weight);
      tensors.push_back(&conv.bias);
    }
  }
  return ParameterBinding<float>(tape, tensors, false);
}

TapVars extract(Tape<float>& tape, const ParameterBinding<float>& params,
                const FeatureExtractor& extractor, Var image) {
  check_image(tape.value(image).shape());
  const auto scale = inverse(extractor.stddev);
  Var x = tape.channel_affine(image, extractor.mean, scale);
  TapVars taps;
  for (std::size_t s = 0; s < extractor.stages.size(); ++s) {
    if (s > 0) x = tape.max_pool2(x);
    for (const ConvSpec& conv : extractor.stages[s]) {
      x = tape.relu(tape.conv2d(x, params(conv.weight), params(conv.bias), conv.stride,
                                conv.padding));
    }
    taps.emplace(std::string(kTapLabels[s]), x);
  }
  return taps;
}

void save_extractor(const FeatureExtractor& extractor, const std::filesystem::path& path) {
  kstm::Container c;
  for (std::size_t s = 0; s < extractor.stages.size(); ++s) {
    for (std::size_t i = 0; i < extractor.stages[s].size(); ++i) {
      const ConvSpec& conv = extractor.stages[s][i];
      c.tensors.push_back(kstm::from_tensor(conv_name(s, i) + ".weight", conv.weight, 4));
      c.tensors.push_back(kstm::from_tensor(conv_name(s, i) + ".bias", conv.bias, 1));
    }
  }
  kstm::write_file(path, c);
}

FeatureExtractor load_extractor(const std::filesystem::path& path,
                                const ExtractorTopology& topology) {
  const kstm::Container c = kstm::read_file(path);
  FeatureExtractor ex = allocate(topology);
  for (std::size_t s = 0; s < ex.stages.size(); ++s) {
    for (std::size_t i = 0; i < ex.stages[s].size(); ++i) {
      ConvSpec& conv = ex.stages[s][i];
      const std::string name = conv_name(s, i);
      conv.weight = kstm::to_tensor(c.get(name + ".weight"), conv.weight.shape());
      conv.bias = kstm::to_tensor(c.get(name + ".bias"), conv.bias.shape());
    }
  }
  return ex;
}

FeatureExtractor load_vgg16(const std::filesystem::path& path) {
  return load_extractor(path, vgg16_topology());
}

}  // namespace styleforge
