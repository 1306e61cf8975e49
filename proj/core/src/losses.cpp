#include "styleforge/losses.hpp"

#include <cmath>
#include <memory>

#include "styleforge/error.hpp"
#include "styleforge/stylenet.hpp"

namespace styleforge {

void LossWeights::validate() const {
  for (double w : {content, style, tv, temporal_feature, temporal_output}) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ConfigError("loss weights must be finite and >= 0");
    }
  }
}

template <typename T>
BasicTensor<T> gram(const BasicTensor<T>& feature) {
  if (feature.n() != 1) {
    throw InvalidArgument("gram: expected a single sample, got " + feature.shape().str());
  }
  const int channels = feature.c();
  const std::size_t plane = feature.shape().plane();
  const T norm = T(1) / static_cast<T>(static_cast<double>(channels) * plane);
  BasicTensor<T> g(1, 1, channels, channels);
  for (int i = 0; i < channels; ++i) {
    const T* fi = feature.plane(0, i);
    for (int j = i; j < channels; ++j) {
      const T* fj = feature.plane(0, j);
      T acc = 0;
      for (std::size_t k = 0; k < plane; ++k) acc += fi[k] * fj[k];
      g.at(0, 0, i, j) = acc * norm;
      g.at(0, 0, j, i) = acc * norm;
    }
  }
  return g;
}

template <typename T>
Var gram(Tape<T>& tape, Var feature) {
  return tape.record(gram(tape.value(feature)), {feature},
                     [&tape, feature](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
                       // dG_ij/dF_i = F_j / (CHW): grad_F = (G' + G'^T) F / (CHW).
                       const BasicTensor<T>& f = tape.value(feature);
                       const int channels = f.c();
                       const std::size_t plane = f.shape().plane();
                       const T norm =
                           T(1) / static_cast<T>(static_cast<double>(channels) * plane);
                       for (int i = 0; i < channels; ++i) {
                         T* gf = gi[0]->plane(0, i);
                         for (int j = 0; j < channels; ++j) {
                           const T coeff = (g.at(0, 0, i, j) + g.at(0, 0, j, i)) * norm;
                           if (coeff == T(0)) continue;
                           const T* fj = f.plane(0, j);
                           for (std::size_t k = 0; k < plane; ++k) gf[k] += coeff * fj[k];
                         }
                       }
                     });
}

StyleTarget make_style_target(const FeatureExtractor& extractor, const Tensor& style_image) {
  StyleTarget target;
  for (const auto& [label, feature] : extract(extractor, style_image)) {
    target.grams.emplace(label, gram(feature));
  }
  return target;
}

template <typename T>
BasicTensor<T> luminance(const BasicTensor<T>& rgb) {
  if (rgb.c() != 3) throw InvalidArgument("luminance: expected 3 channels");
  BasicTensor<T> y(rgb.n(), 1, rgb.h(), rgb.w());
  const std::size_t plane = rgb.shape().plane();
  for (int n = 0; n < rgb.n(); ++n) {
    const T* r = rgb.plane(n, 0);
    const T* g = rgb.plane(n, 1);
    const T* b = rgb.plane(n, 2);
    T* dst = y.plane(n, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = T(0.2126) * r[i] + T(0.7152) * g[i] + T(0.0722) * b[i];
    }
  }
  return y;
}

namespace {

template <typename T>
void expect_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

// Mask replicated over the batch, (n, 1, h, w).
template <typename T>
BasicTensor<T> batch_mask(const OcclusionMask& mask, int batch) {
  BasicTensor<T> one = mask.as_tensor<T>();
  BasicTensor<T> out(batch, 1, mask.height(), mask.width());
  for (int n = 0; n < batch; ++n) {
    std::copy(one.data().begin(), one.data().end(), out.plane(n, 0));
  }
  return out;
}

// Masked mean of squares of `diff` over traceable pixels and all channels.
template <typename T>
Var masked_mean_square(Tape<T>& tape, Var diff, const OcclusionMask& mask) {
  const Shape& s = tape.value(diff).shape();
  if (s.h != mask.height() || s.w != mask.width()) {
    throw InvalidArgument("temporal loss: mask " + std::to_string(mask.height()) + "x" +
                          std::to_string(mask.width()) + " does not match " + s.str());
  }
  const std::size_t traceable = mask.traceable_count();
  Var masked = tape.mul(tape.square(diff), batch_mask<T>(mask, s.n));
  if (traceable == 0) return tape.scale(tape.sum(masked), T(0));
  const double count = static_cast<double>(traceable) * s.c * s.n;
  return tape.scale(tape.sum(masked), static_cast<T>(1.0 / count));
}

}  // namespace

template <typename T>
Var content_loss(Tape<T>& tape, Var generated, const BasicTensor<T>& content) {
  expect_shape<T>(tape.value(generated).shape(), content.shape(), "content_loss");
  return tape.mean(tape.square(tape.sub(generated, tape.input(content))));
}

template <typename T>
Var style_loss(Tape<T>& tape, const std::map<std::string, Var, std::less<>>& generated,
               const std::map<std::string, BasicTensor<T>, std::less<>>& target_grams) {
  if (target_grams.empty()) throw InvalidArgument("style_loss: empty style target");
  Var total;
  for (const auto& [label, target] : target_grams) {
    auto it = generated.find(label);
    if (it == generated.end()) throw InvalidArgument("style_loss: missing tap " + label);
    Var g = gram(tape, it->second);
    expect_shape<T>(tape.value(g).shape(), target.shape(), "style_loss");
    Var term = tape.sum(tape.square(tape.sub(g, tape.input(target))));
    total = total.valid() ? tape.add(total, term) : term;
  }
  return total;
}

template <typename T>
Var tv_loss(Tape<T>& tape, Var image) {
  const BasicTensor<T>& x = tape.value(image);
  if (x.h() < 2 || x.w() < 2) throw InvalidArgument("tv_loss: h and w must be >= 2");
  const double inv_count = 1.0 / static_cast<double>(x.size());
  double acc = 0.0;
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const T* p = x.plane(n, c);
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j) {
          const T v = p[static_cast<std::size_t>(i) * x.w() + j];
          if (i + 1 < x.h()) {
            const T d = p[static_cast<std::size_t>(i + 1) * x.w() + j] - v;
            acc += static_cast<double>(d) * d;
          }
          if (j + 1 < x.w()) {
            const T d = p[static_cast<std::size_t>(i) * x.w() + j + 1] - v;
            acc += static_cast<double>(d) * d;
          }
        }
    }
  return tape.record(
      BasicTensor<T>(1, 1, 1, 1, static_cast<T>(acc * inv_count)), {image},
      [&tape, image, inv_count](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
        const BasicTensor<T>& x = tape.value(image);
        const T k = static_cast<T>(2.0 * inv_count) * g[0];
        for (int n = 0; n < x.n(); ++n)
          for (int c = 0; c < x.c(); ++c) {
            const T* p = x.plane(n, c);
            T* gp = gi[0]->plane(n, c);
            for (int i = 0; i < x.h(); ++i)
              for (int j = 0; j < x.w(); ++j) {
                const std::size_t at = static_cast<std::size_t>(i) * x.w() + j;
                if (i + 1 < x.h()) {
                  const T d = p[at + x.w()] - p[at];
                  gp[at + x.w()] += k * d;
                  gp[at] -= k * d;
                }
                if (j + 1 < x.w()) {
                  const T d = p[at + 1] - p[at];
                  gp[at + 1] += k * d;
                  gp[at] -= k * d;
                }
              }
          }
      });
}

template <typename T>
Var temporal_feature_loss(Tape<T>& tape, Var features, Var previous_features,
                          const FlowField& flow, const OcclusionMask& mask) {
  expect_shape<T>(tape.value(features).shape(), tape.value(previous_features).shape(),
                  "temporal_feature_loss");
  Var warped = warp(tape, previous_features, flow);
  return masked_mean_square(tape, tape.sub(features, warped), mask);
}

template <typename T>
Var temporal_output_loss(Tape<T>& tape, Var output, Var previous_output,
                         const BasicTensor<T>& input, const BasicTensor<T>& previous_input,
                         const FlowField& flow, const OcclusionMask& mask) {
  const Shape& s = tape.value(output).shape();
  expect_shape<T>(s, tape.value(previous_output).shape(), "temporal_output_loss");
  expect_shape<T>(s, input.shape(), "temporal_output_loss");
  expect_shape<T>(s, previous_input.shape(), "temporal_output_loss");
  const BasicTensor<T> y_now = luminance(input);
  const BasicTensor<T> y_prev = luminance(warp(previous_input, flow));
  BasicTensor<T> correction(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j)
          correction.at(n, c, i, j) = y_now.at(n, 0, i, j) - y_prev.at(n, 0, i, j);
  Var diff = tape.sub(tape.sub(output, warp(tape, previous_output, flow)),
                      tape.input(std::move(correction)));
  return masked_mean_square(tape, diff, mask);
}

// --- objectives -----------------------------------------------------------

namespace {

template <typename T>
Var weighted(Tape<T>& tape, Var term, double weight) {
  return tape.scale(term, static_cast<T>(weight));
}

std::map<std::string, Tensor, std::less<>> target_map(const StyleTarget& target) {
  return {target.grams.begin(), target.grams.end()};
}

const Tensor& tap(const TapMap& taps, std::string_view label) {
  auto it = taps.find(label);
  if (it == taps.end()) throw InvalidArgument("missing tap " + std::string(label));
  return it->second;
}

Var tap(const TapVars& taps, std::string_view label) {
  auto it = taps.find(label);
  if (it == taps.end()) throw InvalidArgument("missing tap " + std::string(label));
  return it->second;
}

}  // namespace

ObjectiveVars stage1_objective(Tape<float>& tape, Var output, const TapVars& output_taps,
                               const TapMap& content_taps, const StyleTarget& target,
                               const LossWeights& weights) {
  ObjectiveVars v;
  v.content = content_loss(tape, tap(output_taps, kContentTap), tap(content_taps, kContentTap));
  v.style = style_loss(tape, output_taps, target_map(target));
  v.tv = tv_loss(tape, output);
  v.total = tape.add(tape.add(weighted(tape, v.content, weights.content),
                              weighted(tape, v.style, weights.style)),
                     weighted(tape, v.tv, weights.tv));
  return v;
}

ObjectiveVars stage2_objective(Tape<float>& tape, const FrameVars& previous,
                               const FrameVars& current, const FlowField& flow,
                               const FlowField& flow_down, const OcclusionMask& mask,
                               const OcclusionMask& mask_down, const StyleTarget& target,
                               const LossWeights& weights) {
  const ObjectiveVars a = stage1_objective(tape, previous.output, previous.output_taps,
                                           *previous.content_taps, target, weights);
  const ObjectiveVars b = stage1_objective(tape, current.output, current.output_taps,
                                           *current.content_taps, target, weights);
  ObjectiveVars v;
  v.content = tape.add(a.content, b.content);
  v.style = tape.add(a.style, b.style);
  v.tv = tape.add(a.tv, b.tv);
  v.temporal_feature =
      temporal_feature_loss(tape, current.features, previous.features, flow_down, mask_down);
  v.temporal_output = temporal_output_loss(tape, current.output, previous.output,
                                           *current.input, *previous.input, flow, mask);
  v.total = tape.add(tape.add(a.total, b.total),
                     tape.add(weighted(tape, v.temporal_feature, weights.temporal_feature),
                              weighted(tape, v.temporal_output, weights.temporal_output)));
  return v;
}

LossTerms read_terms(const Tape<float>& tape, const ObjectiveVars& vars) {
  auto read = [&](Var v) { return v.valid() ? static_cast<double>(scalar(tape, v)) : 0.0; };
  LossTerms t;
  t.content = read(vars.content);
  t.style = read(vars.style);
  t.tv = read(vars.tv);
  t.temporal_feature = read(vars.temporal_feature);
  t.temporal_output = read(vars.temporal_output);
  t.total = read(vars.total);
  return t;
}

// --- plain forms ----------------------------------------------------------

double content_loss(const TapMap& generated, const TapMap& content) {
  Tape<float> tape;
  Var g = tape.input(tap(generated, kContentTap));
  return scalar(tape, content_loss(tape, g, tap(content, kContentTap)));
}

double style_loss(const TapMap& generated, const StyleTarget& target) {
  Tape<float> tape;
  TapVars vars;
  for (const auto& [label, t] : generated) vars.emplace(label, tape.input(t));
  return scalar(tape, style_loss(tape, vars, target_map(target)));
}

double tv_loss(const Tensor& image) {
  Tape<float> tape;
  return scalar(tape, tv_loss(tape, tape.input(image)));
}

double temporal_feature_loss(const Tensor& features, const Tensor& previous_features,
                             const FlowField& flow, const OcclusionMask& mask) {
  Tape<float> tape;
  return scalar(tape, temporal_feature_loss(tape, tape.input(features),
                                            tape.input(previous_features), flow, mask));
}

double temporal_output_loss(const Tensor& output, const Tensor& previous_output,
                            const Tensor& input, const Tensor& previous_input,
                            const FlowField& flow, const OcclusionMask& mask) {
  Tape<float> tape;
  return scalar(tape, temporal_output_loss(tape, tape.input(output), tape.input(previous_output),
                                           input, previous_input, flow, mask));
}

LossTerms total_stage1(const Tensor& model_output, const TapMap& output_taps,
                       const TapMap& content_taps, const StyleTarget& target,
                       const LossWeights& weights) {
  Tape<float> tape;
  TapVars taps;
  for (const auto& [label, t] : output_taps) taps.emplace(label, tape.input(t));
  const ObjectiveVars v =
      stage1_objective(tape, tape.input(model_output), taps, content_taps, target, weights);
  return read_terms(tape, v);
}

LossTerms total_stage2(const FrameEvaluation& previous, const FrameEvaluation& current,
                       const FlowField& flow, const OcclusionMask& mask,
                       const StyleTarget& target, const LossWeights& weights) {
  Tape<float> tape;
  auto frame_vars = [&](const FrameEvaluation& f) {
    FrameVars fv;
    fv.input = &f.input;
    fv.content_taps = &f.content_taps;
    fv.output = tape.input(f.output);
    fv.features = tape.input(f.features);
    for (const auto& [label, t] : f.output_taps) fv.output_taps.emplace(label, tape.input(t));
    return fv;
  };
  const FrameVars prev = frame_vars(previous);
  const FrameVars cur = frame_vars(current);
  const ObjectiveVars v = stage2_objective(tape, prev, cur, flow, downsample_flow(flow, 4),
                                          mask, downsample_mask(mask, 4), target, weights);
  return read_terms(tape, v);
}

#define STYLEFORGE_INSTANTIATE_LOSSES(T)                                                        \
  template BasicTensor<T> gram(const BasicTensor<T>&);                                          \
  template Var gram(Tape<T>&, Var);                                                             \
  template BasicTensor<T> luminance(const BasicTensor<T>&);                                     \
  template Var content_loss(Tape<T>&, Var, const BasicTensor<T>&);                              \
  template Var style_loss(Tape<T>&, const std::map<std::string, Var, std::less<>>&,             \
                          const std::map<std::string, BasicTensor<T>, std::less<>>&);           \
  template Var tv_loss(Tape<T>&, Var);                                                          \
  template Var temporal_feature_loss(Tape<T>&, Var, Var, const FlowField&,                      \
                                     const OcclusionMask&);                                     \
  template Var temporal_output_loss(Tape<T>&, Var, Var, const BasicTensor<T>&,                  \
                                    const BasicTensor<T>&, const FlowField&,                    \
                                    const OcclusionMask&);

STYLEFORGE_INSTANTIATE_LOSSES(float)
STYLEFORGE_INSTANTIATE_LOSSES(double)

#undef STYLEFORGE_INSTANTIATE_LOSSES

}  // namespace styleforge
