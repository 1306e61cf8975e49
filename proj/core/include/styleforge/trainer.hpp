#pragma once

// Two-stage training: stage 1 fits content + style + TV on single frames;
// stage 2 fine-tunes an existing model on consecutive frame pairs with the
// temporal feature and output terms added.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "styleforge/flow.hpp"
#include "styleforge/losses.hpp"
#include "styleforge/perceptual.hpp"
#include "styleforge/stylenet.hpp"

namespace styleforge {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update. State moments are allocated on first use.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config);

/// Scales all gradients so their joint L2 norm is at most max_norm; returns
/// the norm before clipping. max_norm <= 0 disables clipping.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

struct TrainingConfig {
  LossWeights weights;
  AdamConfig adam;
  int steps = 0;  ///< total optimizer steps to reach, counted from step 0
  int batch_size = 1;
  int height = 256;
  int width = 256;
  int checkpoint_interval = 0;  ///< 0 disables checkpoints
  std::filesystem::path checkpoint_dir;
  std::uint64_t seed = 0;
  double clip_norm = 10.0;

  /// Throws ConfigError: steps/batch/interval ranges, resolution not
  /// divisible by 8, invalid loss weights.
  void validate() const;
};

struct TraceRow {
  std::int64_t step = 0;
  LossTerms terms;
};

using LossTrace = std::vector<TraceRow>;

/// Header "step,content,style,tv,temp_f,temp_o,total" plus one row per step.
void write_trace_csv(std::ostream& out, const LossTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const LossTrace& trace);

struct PairSample {
  Tensor previous;     ///< I_{t-1}
  Tensor current;      ///< I_t
  FlowField flow;      ///< t -> t-1 warp flow on frame t's grid
  OcclusionMask mask;  ///< traceability of frame t pixels

  /// Throws InvalidArgument when frame, flow, and mask extents disagree.
  void validate() const;
};

struct TrainResult {
  StyleNetModel model;
  AdamState optimizer;
  LossTrace trace;
};

/// Batch slot b of step s draws sample permutation[epoch][k % N] with
/// k = s * batch + b; permutations are derived from the seed, so a resumed run
/// sees the same order as an uninterrupted one.
std::size_t sample_index(std::uint64_t seed, std::int64_t step, int slot, int batch,
                         std::size_t count);

/// Adam on the stage-1 objective from resume.step (0 when absent) up to
/// config.steps. Frames must be (1, 3, height, width).
TrainResult train_stage1(StyleNetModel model, std::span<const Tensor> frames,
                         const FeatureExtractor& extractor, const StyleTarget& target,
                         const TrainingConfig& config,
                         std::optional<AdamState> resume = std::nullopt);

/// Adam on the stage-2 objective starting from the given (trained) weights.
TrainResult finetune_stage2(StyleNetModel model, std::span<const PairSample> pairs,
                            const FeatureExtractor& extractor, const StyleTarget& target,
                            const TrainingConfig& config,
                            std::optional<AdamState> resume = std::nullopt);

/// Mean stage-1 loss of the model over the given frames.
LossTerms evaluate_stage1(const StyleNetModel& model, std::span<const Tensor> frames,
                          const FeatureExtractor& extractor, const StyleTarget& target,
                          const LossWeights& weights);

/// Optimizer sidecar: tensors "<param>.m" / "<param>.v" in the KSTM container
/// plus "adam.step".
void save_optimizer(const StyleNetModel& model, const AdamState& state,
                    const std::filesystem::path& path);
AdamState load_optimizer(const StyleNetModel& model, const std::filesystem::path& path);

/// Trailing moving average of the total loss over `window` steps (fewer at
/// the start of the trace).
std::vector<double> smoothed_totals(const LossTrace& trace, std::size_t window = 20);

}  // namespace styleforge
