#pragma once

// User-facing workflows on top of the library: frame directories, training
// job files, stylization, throughput benchmarking, and the flicker metric.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "styleforge/flow.hpp"
#include "styleforge/perceptual.hpp"
#include "styleforge/stylenet.hpp"
#include "styleforge/trainer.hpp"

namespace styleforge {

// --- frames ----------------------------------------------------------------

/// Numbered P6 frames of one clip; lexicographic file order is temporal order.
struct FrameSequence {
  std::vector<std::filesystem::path> paths;
  int height = 0;
  int width = 0;
  double frame_rate = 25.0;  ///< informational only

  /// Lists *.ppm in `dir` (non-recursive) and checks they share one size.
  static FrameSequence scan(const std::filesystem::path& dir);
  std::vector<Tensor> load() const;
};

// --- flicker ---------------------------------------------------------------

/// Mean over consecutive pairs of the masked MSE between frame t and the
/// warped frame t-1; flows[i] and masks[i] relate frame i+1 to frame i.
double flicker_metric(std::span<const Tensor> stylized, std::span<const FlowField> flows,
                      std::span<const OcclusionMask> masks);

// --- training jobs ---------------------------------------------------------

struct TrainJob {
  TrainingConfig training;
  ArchConfig arch;
  std::uint64_t init_seed = 0;
  std::filesystem::path style_image;
  int style_size = 512;          ///< shorter side of the style image
  std::string extractor = "tiny";  ///< "tiny" or a converted VGG16 KSTM file
  std::uint64_t extractor_seed = 0;
  std::filesystem::path model;   ///< starting weights (required to fine-tune)
  std::filesystem::path trace;   ///< CSV output; defaults to <out>.trace.csv
};

/// Flat UTF-8 key=value lines; '#' starts a comment. Unknown or duplicate keys
/// and malformed values raise ConfigError mentioning `source` and the line;
/// relative paths resolve against `base_dir`.
TrainJob parse_train_config(std::string_view text, const std::string& source,
                            const std::filesystem::path& base_dir = {});
TrainJob load_train_config(const std::filesystem::path& path);

/// Resized so the shorter side is `shorter_side`, rounded to multiples of 8.
Tensor prepare_style_image(const Tensor& image, int shorter_side);

FeatureExtractor make_extractor(const TrainJob& job);

/// Center crop to (height, width); throws InvalidArgument when smaller.
Tensor center_crop(const Tensor& t, int height, int width);
FlowField center_crop(const FlowField& f, int height, int width);
OcclusionMask center_crop(const OcclusionMask& m, int height, int width);

/// All *.ppm below `dir` (recursive, sorted), resized to the job resolution.
std::vector<Tensor> load_training_frames(const std::filesystem::path& dir, int height,
                                         int width);

/// Sequences are `dir` itself or its immediate subdirectories that hold a
/// frames/ folder. Pair k (frames k, k+1) reads flow/NNNN_backward.flo and
/// either flow/NNNN_mask.pgm or, failing that, flow/NNNN_forward.flo for a
/// consistency mask. Larger inputs are center-cropped.
std::vector<PairSample> load_training_pairs(const std::filesystem::path& dir, int height,
                                            int width);

/// Writes a synthetic clip in the layout load_training_pairs() reads.
void write_sequence(const SyntheticSequence& seq, const std::filesystem::path& dir);

struct JobOutput {
  TrainResult result;
  std::filesystem::path model;
  std::filesystem::path trace;
};

JobOutput run_train(const TrainJob& job, const std::filesystem::path& data_dir,
                    const std::filesystem::path& out_model, std::ostream& log);
JobOutput run_finetune(const TrainJob& job, const std::filesystem::path& data_dir,
                       const std::filesystem::path& out_model, std::ostream& log);

// --- stylize ---------------------------------------------------------------

struct StylizeOptions {
  std::optional<std::pair<int, int>> resize;  ///< (width, height)
  int workers = 1;
};

struct StylizeReport {
  std::vector<std::filesystem::path> outputs;
  std::vector<double> frame_ms;
};

StylizeReport stylize_directory(const StyleNetModel& model, const std::filesystem::path& in_dir,
                                const std::filesystem::path& out_dir,
                                const StylizeOptions& options, std::ostream* log = nullptr);

// --- bench -----------------------------------------------------------------

struct BenchResult {
  ArchConfig config;
  std::size_t params = 0;
  int width = 0;
  int height = 0;
  std::size_t frames = 0;
  double total_seconds = 0.0;    ///< resize + forward + clamp
  double forward_seconds = 0.0;  ///< forward only

  double fps() const noexcept { return frames / total_seconds; }
  double forward_fps() const noexcept { return frames / forward_seconds; }
};

/// Times `loop` passes over the frames at (width, height), resize included.
/// Requires frames.size() * loop >= min_frames.
BenchResult bench_model(const StyleNetModel& model, std::span<const Tensor> frames, int width,
                        int height, int loop, std::size_t min_frames = 100);

/// Parses "all" or a comma list of alpha:beta[:variant] entries.
std::vector<ArchConfig> parse_config_list(std::string_view text);

std::string host_description();

void write_bench_csv(std::ostream& out, std::span<const BenchResult> rows,
                     const std::string& host);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

// --- inspect ---------------------------------------------------------------

struct SizeRow {
  ArchConfig config;
  std::size_t params = 0;
  double params_percent = 0.0;  ///< of the ReCoNet baseline
  double megabytes = 0.0;
  double size_percent = 0.0;    ///< from the two-decimal MB values, as tabulated
};

SizeRow size_row(const ArchConfig& config);
std::string format_size_table(std::span<const SizeRow> rows);

}  // namespace styleforge
