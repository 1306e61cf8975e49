#pragma once

// Scalar training objectives. Each loss has a tape form (for training and
// gradient checks, in float or double) and a plain evaluation form.
//
//   stage 1:  gamma * content + rho * style + tau * tv
//   stage 2:  sum over {t-1, t} of the stage-1 terms
//             + lambda_f * temporal_feature + lambda_o * temporal_output

#include <map>
#include <string>

#include "styleforge/autograd.hpp"
#include "styleforge/flow.hpp"
#include "styleforge/perceptual.hpp"
#include "styleforge/tensor.hpp"

namespace styleforge {

struct LossWeights {
  double content = 1.0;             ///< gamma
  double style = 1e5;               ///< rho
  double tv = 1e-6;                 ///< tau
  double temporal_feature = 1e-1;   ///< lambda_f
  double temporal_output = 1e1;     ///< lambda_o

  /// Throws ConfigError unless every weight is finite and >= 0.
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// Gram matrices of the style image at every tap, each (1, 1, C, C).
struct StyleTarget {
  std::map<std::string, Tensor, std::less<>> grams;
};

/// G = F F^T / (C H W) for a (1, C, H, W) feature; returns (1, 1, C, C).
template <typename T>
BasicTensor<T> gram(const BasicTensor<T>& feature);

template <typename T>
Var gram(Tape<T>& tape, Var feature);

StyleTarget make_style_target(const FeatureExtractor& extractor, const Tensor& style_image);

/// Relative luminance 0.2126 R + 0.7152 G + 0.0722 B as (n, 1, h, w).
template <typename T>
BasicTensor<T> luminance(const BasicTensor<T>& rgb);

// --- tape forms -----------------------------------------------------------

/// Mean squared difference of the two features.
template <typename T>
Var content_loss(Tape<T>& tape, Var generated, const BasicTensor<T>& content);

/// Sum over taps of ||gram(generated) - target||_F^2. Every target tap must be
/// present in `generated`.
template <typename T>
Var style_loss(Tape<T>& tape, const std::map<std::string, Var, std::less<>>& generated,
               const std::map<std::string, BasicTensor<T>, std::less<>>& target_grams);

/// Squared forward differences along h and w, summed, divided by element count.
template <typename T>
Var tv_loss(Tape<T>& tape, Var image);

/// Mean over traceable cells and channels of (F_t - warp(F_prev))^2; 0 when
/// no cell is traceable. Flow and mask are at feature resolution.
template <typename T>
Var temporal_feature_loss(Tape<T>& tape, Var features, Var previous_features,
                          const FlowField& flow, const OcclusionMask& mask);

/// Mean over traceable pixels and channels of
/// ((O_t - warp(O_prev)) - (Y(I_t) - Y(warp(I_prev))))^2.
template <typename T>
Var temporal_output_loss(Tape<T>& tape, Var output, Var previous_output,
                         const BasicTensor<T>& input, const BasicTensor<T>& previous_input,
                         const FlowField& flow, const OcclusionMask& mask);

// --- plain forms ----------------------------------------------------------

double content_loss(const TapMap& generated, const TapMap& content);
double style_loss(const TapMap& generated, const StyleTarget& target);
double tv_loss(const Tensor& image);
double temporal_feature_loss(const Tensor& features, const Tensor& previous_features,
                             const FlowField& flow, const OcclusionMask& mask);
double temporal_output_loss(const Tensor& output, const Tensor& previous_output,
                            const Tensor& input, const Tensor& previous_input,
                            const FlowField& flow, const OcclusionMask& mask);

struct LossTerms {
  double content = 0.0;
  double style = 0.0;
  double tv = 0.0;
  double temporal_feature = 0.0;
  double temporal_output = 0.0;
  double total = 0.0;
};

/// Stage-1 objective for one frame: taps of the model output, taps of the
/// content frame, and the raw output image.
LossTerms total_stage1(const Tensor& model_output, const TapMap& output_taps,
                       const TapMap& content_taps, const StyleTarget& target,
                       const LossWeights& weights);

/// Tape handles of every term of an objective; absent terms are invalid Vars.
struct ObjectiveVars {
  Var content;
  Var style;
  Var tv;
  Var temporal_feature;
  Var temporal_output;
  Var total;
};

/// One frame of a stage-2 pair as seen by the objective.
struct FrameVars {
  const Tensor* input = nullptr;         ///< I
  const TapMap* content_taps = nullptr;  ///< taps of I (constants)
  Var output;                            ///< O
  Var features;                          ///< F
  TapVars output_taps;                   ///< taps of O
};

ObjectiveVars stage1_objective(Tape<float>& tape, Var output, const TapVars& output_taps,
                               const TapMap& content_taps, const StyleTarget& target,
                               const LossWeights& weights);

/// flow/mask at full resolution for the output term, flow_down/mask_down at
/// feature resolution for the feature term.
ObjectiveVars stage2_objective(Tape<float>& tape, const FrameVars& previous,
                               const FrameVars& current, const FlowField& flow,
                               const FlowField& flow_down, const OcclusionMask& mask,
                               const OcclusionMask& mask_down, const StyleTarget& target,
                               const LossWeights& weights);

LossTerms read_terms(const Tape<float>& tape, const ObjectiveVars& vars);

struct FrameEvaluation {
  Tensor input;         ///< I
  Tensor output;        ///< O (raw model output)
  Tensor features;      ///< F (encoder output)
  TapMap output_taps;   ///< extractor taps of O
  TapMap content_taps;  ///< extractor taps of I
};

/// Stage-2 objective for a pair; `flow`/`mask` are at full resolution and
/// are downsampled by 4 for the feature term. content/style/tv report the sum
/// over both frames.
LossTerms total_stage2(const FrameEvaluation& previous, const FrameEvaluation& current,
                       const FlowField& flow, const OcclusionMask& mask,
                       const StyleTarget& target, const LossWeights& weights);

}  // namespace styleforge
