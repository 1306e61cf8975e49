#include "styleforge/stylenet.hpp"

#include <cmath>
#include <sstream>

#include "styleforge/error.hpp"
#include "styleforge/io.hpp"
#include "styleforge/kstm.hpp"

namespace styleforge {

std::string_view to_string(Variant v) noexcept {
  return v == Variant::legacy_v1 ? "legacy_v1" : "paper";
}

Variant parse_variant(std::string_view text) {
  if (text == "paper") return Variant::paper;
  if (text == "legacy_v1") return Variant::legacy_v1;
  throw ConfigError("unknown variant \"" + std::string(text) + "\" (expected paper or legacy_v1)");
}

namespace {

int scaled(float factor, int base) {
  return static_cast<int>(std::lround(static_cast<double>(factor) * base));
}

}  // namespace

std::array<int, 3> ArchConfig::widths() const {
  return {scaled(alpha, 32), scaled(alpha, 48), scaled(alpha, 64)};
}

int ArchConfig::residual_blocks() const {
  if (variant == Variant::legacy_v1 && beta == 1.0f) return 5;
  return scaled(beta, 4);
}

void ArchConfig::validate() const {
  if (!(alpha > 0.0f && alpha <= 1.0f)) {
    throw ConfigError("alpha must lie in (0, 1], got " + std::to_string(alpha));
  }
  if (!(beta > 0.0f && beta <= 1.0f)) {
    throw ConfigError("beta must lie in (0, 1], got " + std::to_string(beta));
  }
  for (int w : widths()) {
    if (w < 1) throw ConfigError("alpha " + std::to_string(alpha) + " yields a zero-width layer");
  }
  if (residual_blocks() < 1) {
    throw ConfigError("beta " + std::to_string(beta) + " yields no residual blocks");
  }
}

std::string ArchConfig::label() const {
  std::ostringstream os;
  os << "alpha=" << alpha << " beta=" << beta << " " << to_string(variant);
  return os.str();
}

std::vector<ArchConfig> size_study_configs() {
  std::vector<ArchConfig> out;
  for (float beta : {1.0f, 0.75f, 0.5f}) {
    for (float alpha : {1.0f, 0.75f, 0.5f, 0.25f, 0.125f}) {
      out.push_back({alpha, beta, beta == 1.0f ? Variant::legacy_v1 : Variant::paper});
    }
  }
  return out;
}

std::vector<NamedParam> StyleNetModel::parameters() {
  std::vector<NamedParam> out;
  auto conv = [&](const std::string& prefix, ConvSpec& c) {
    out.push_back({prefix + ".weight", &c.weight, 4});
    out.push_back({prefix + ".bias", &c.bias, 1});
  };
  auto layer = [&](const std::string& prefix, ConvNormLayer& l) {
    conv(prefix + ".conv", l.conv);
    out.push_back({prefix + ".norm.gamma", &l.norm.gamma, 1});
    out.push_back({prefix + ".norm.beta", &l.norm.beta, 1});
  };
  for (std::size_t i = 0; i < encoder.size(); ++i) layer("encoder." + std::to_string(i), encoder[i]);
  for (std::size_t i = 0; i < residual.size(); ++i) {
    layer("residual." + std::to_string(i) + ".first", residual[i].first);
    layer("residual." + std::to_string(i) + ".second", residual[i].second);
  }
  for (std::size_t i = 0; i < decoder.size(); ++i) layer("decoder." + std::to_string(i), decoder[i]);
  conv("output", output);
  return out;
}

std::vector<NamedConstParam> StyleNetModel::parameters() const {
  std::vector<NamedConstParam> out;
  for (const NamedParam& p : const_cast<StyleNetModel*>(this)->parameters()) {
    out.push_back({p.name, p.tensor, p.rank});
  }
  return out;
}

std::size_t StyleNetModel::allocated_scalars() const {
  std::size_t total = 0;
  for (const NamedConstParam& p : parameters()) total += p.tensor->size();
  return total;
}

namespace {

ConvNormLayer make_layer(int in, int out, int kernel, int stride) {
  ConvNormLayer l;
  l.conv = ConvSpec::zeros(in, out, kernel, stride);
  l.norm.gamma = Tensor(1, out, 1, 1, 1.0f);
  l.norm.beta = Tensor(1, out, 1, 1, 0.0f);
  return l;
}

// Allocates the layer structure with gamma = 1 and all other values zero.
StyleNetModel allocate(const ArchConfig& config) {
  config.validate();
  const auto [w1, w2, w3] = config.widths();
  const int k = config.end_kernel();
  StyleNetModel m;
  m.config = config;
  m.encoder = {make_layer(3, w1, k, 1), make_layer(w1, w2, 3, 2), make_layer(w2, w3, 3, 2)};
  m.residual.resize(static_cast<std::size_t>(config.residual_blocks()));
  for (ResidualBlock& b : m.residual) {
    b.first = make_layer(w3, w3, 3, 1);
    b.second = make_layer(w3, w3, 3, 1);
  }
  m.decoder = {make_layer(w3, w2, 3, 1), make_layer(w2, w1, 3, 1)};
  m.output = ConvSpec::zeros(w1, 3, k, 1);
  return m;
}

}  // namespace

StyleNetModel build(const ArchConfig& config, std::uint64_t init_seed) {
  StyleNetModel m = allocate(config);
  SplitMix64 rng(init_seed);
  for (const NamedParam& p : m.parameters()) {
    if (p.rank != 4) continue;
    const Shape& s = p.tensor->shape();
    const double fan_in = static_cast<double>(s.c) * s.h * s.w;
    const double fan_out = static_cast<double>(s.n) * s.h * s.w;
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (float& v : p.tensor->data()) v = static_cast<float>(rng.uniform(-bound, bound));
  }
  return m;
}

namespace {

// Network topology written once against an executor, so inference on plain
// tensors and recording on a tape share it.
template <class Exec>
typename Exec::Value run_network(const StyleNetModel& m, Exec& ex, typename Exec::Value x,
                                 typename Exec::Value& features) {
  auto block = [&](typename Exec::Value v, const ConvNormLayer& l) {
    return ex.relu(ex.norm(ex.conv(std::move(v), l.conv), l.norm));
  };
  x = block(std::move(x), m.encoder[0]);
  x = block(std::move(x), m.encoder[1]);
  x = block(std::move(x), m.encoder[2]);
  features = x;
  for (const ResidualBlock& r : m.residual) {
    auto branch = block(x, r.first);
    branch = ex.norm(ex.conv(std::move(branch), r.second.conv), r.second.norm);
    x = ex.add(std::move(x), std::move(branch));
  }
  x = block(ex.upsample(std::move(x)), m.decoder[0]);
  x = block(ex.upsample(std::move(x)), m.decoder[1]);
  return ex.conv(std::move(x), m.output);
}

struct TensorExec {
  using Value = Tensor;
  Tensor conv(const Tensor& x, const ConvSpec& c) { return conv2d(x, c); }
  Tensor norm(const Tensor& x, const NormParams& p) {
    return instance_norm(x, p.gamma.data(), p.beta.data());
  }
  Tensor relu(Tensor x) {
    for (float& v : x.data()) v = v > 0.0f ? v : 0.0f;
    return x;
  }
  Tensor upsample(const Tensor& x) { return upsample_nearest(x, 2); }
  Tensor add(Tensor a, const Tensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
  }
};

struct TapeExec {
  using Value = Var;
  Tape<float>& tape;
  const ParameterBinding<float>& params;

  Var conv(Var x, const ConvSpec& c) {
    return tape.conv2d(x, params(c.weight), params(c.bias), c.stride, c.padding);
  }
  Var norm(Var x, const NormParams& p) {
    return tape.instance_norm(x, params(p.gamma), params(p.beta));
  }
  Var relu(Var x) { return tape.relu(x); }
  Var upsample(Var x) { return tape.upsample_nearest(x, 2); }
  Var add(Var a, Var b) { return tape.add(a, b); }
};

void check_frame(const Shape& s) {
  if (s.c != 3) throw InvalidArgument("stylenet: frame must have 3 channels, got " + s.str());
  if (s.h % 4 != 0 || s.w % 4 != 0) {
    throw InvalidArgument("stylenet: frame height and width must be divisible by 4, got " +
                          s.str());
  }
}

}  // namespace

StyleNetOutput forward(const StyleNetModel& model, const Tensor& frame) {
  check_frame(frame.shape());
  TensorExec ex;
  StyleNetOutput out;
  out.image = run_network(model, ex, frame, out.features);
  return out;
}

Tensor stylize(const StyleNetModel& model, const Tensor& frame) {
  return clamp(forward(model, frame).image, 0.0f, 1.0f);
}

ParameterBinding<float> bind_parameters(Tape<float>& tape, const StyleNetModel& model,
                                        bool requires_grad) {
  std::vector<const Tensor*> tensors;
  for (const NamedConstParam& p : model.parameters()) tensors.push_back(p.tensor);
  return ParameterBinding<float>(tape, tensors, requires_grad);
}

StyleNetVars forward(Tape<float>& tape, const ParameterBinding<float>& params,
                     const StyleNetModel& model, Var frame) {
  check_frame(tape.value(frame).shape());
  TapeExec ex{tape, params};
  StyleNetVars out;
  out.image = run_network(model, ex, frame, out.features);
  return out;
}

namespace {

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t kernel) {
  return in * out * kernel * kernel + out;
}

std::size_t norm_params(std::size_t channels) { return 2 * channels; }

std::size_t count_network(std::size_t w1, std::size_t w2, std::size_t w3, std::size_t blocks,
                          std::size_t end_kernel) {
  std::size_t n = 0;
  n += conv_params(3, w1, end_kernel) + norm_params(w1);
  n += conv_params(w1, w2, 3) + norm_params(w2);
  n += conv_params(w2, w3, 3) + norm_params(w3);
  n += blocks * 2 * (conv_params(w3, w3, 3) + norm_params(w3));
  n += conv_params(w3, w2, 3) + norm_params(w2);
  n += conv_params(w2, w1, 3) + norm_params(w1);
  n += conv_params(w1, 3, end_kernel);
  return n;
}

}  // namespace

std::size_t param_count(const ArchConfig& config) {
  config.validate();
  const auto [w1, w2, w3] = config.widths();
  return count_network(static_cast<std::size_t>(w1), static_cast<std::size_t>(w2),
                       static_cast<std::size_t>(w3),
                       static_cast<std::size_t>(config.residual_blocks()),
                       static_cast<std::size_t>(config.end_kernel()));
}

std::size_t reconet_reference_count() { return count_network(48, 96, 192, 4, 9); }

SizeEstimate size_estimate_for_count(std::size_t params) {
  SizeEstimate s;
  s.bytes = params * sizeof(float);
  s.megabytes = static_cast<double>(s.bytes) / (1024.0 * 1024.0);
  return s;
}

SizeEstimate size_estimate(const ArchConfig& config) {
  return size_estimate_for_count(param_count(config));
}

std::vector<std::byte> encode_model(const StyleNetModel& model) {
  kstm::Container c;
  c.alpha = model.config.alpha;
  c.beta = model.config.beta;
  c.variant = static_cast<std::uint8_t>(model.config.variant);
  for (const NamedConstParam& p : model.parameters()) {
    c.tensors.push_back(kstm::from_tensor(p.name, *p.tensor, p.rank));
  }
  return kstm::encode(c);
}

StyleNetModel decode_model(std::span<const std::byte> bytes) {
  const kstm::Container c = kstm::decode(bytes);
  if (c.variant > static_cast<std::uint8_t>(Variant::legacy_v1)) {
    throw ConfigError("model file has unknown variant " + std::to_string(c.variant));
  }
  StyleNetModel m = allocate({c.alpha, c.beta, static_cast<Variant>(c.variant)});
  for (const NamedParam& p : m.parameters()) {
    *p.tensor = kstm::to_tensor(c.get(p.name), p.tensor->shape());
  }
  return m;
}

void save(const StyleNetModel& model, const std::filesystem::path& path) {
  write_bytes(path, encode_model(model));
}

StyleNetModel load(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return decode_model(bytes);
  } catch (const ParseError& e) {
    throw ParseError(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace styleforge
