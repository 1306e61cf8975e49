#include "styleforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "styleforge/error.hpp"
#include "styleforge/image_io.hpp"
#include "styleforge/io.hpp"
#include "styleforge/ops.hpp"

namespace styleforge {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> list_ppm(const fs::path& dir, bool recursive) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<fs::path> out;
  auto take = [&](const fs::directory_entry& e) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") out.push_back(e.path());
  };
  if (recursive) {
    for (const auto& e : fs::recursive_directory_iterator(dir)) take(e);
  } else {
    for (const auto& e : fs::directory_iterator(dir)) take(e);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string pair_stem(std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", k);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double elapsed_seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

// --- frames ----------------------------------------------------------------

FrameSequence FrameSequence::scan(const fs::path& dir) {
  FrameSequence seq;
  seq.paths = list_ppm(dir, false);
  if (seq.paths.empty()) throw IoError(dir.string() + ": no .ppm frames");
  const Tensor first = read_ppm_file(seq.paths.front());
  seq.height = first.h();
  seq.width = first.w();
  return seq;
}

std::vector<Tensor> FrameSequence::load() const {
  std::vector<Tensor> frames;
  frames.reserve(paths.size());
  for (const auto& p : paths) {
    Tensor t = read_ppm_file(p);
    if (t.h() != height || t.w() != width) {
      throw InvalidArgument(p.string() + ": frame is " + std::to_string(t.w()) + "x" +
                            std::to_string(t.h()) + ", sequence is " + std::to_string(width) +
                            "x" + std::to_string(height));
    }
    frames.push_back(std::move(t));
  }
  return frames;
}

// --- flicker ---------------------------------------------------------------

double flicker_metric(std::span<const Tensor> stylized, std::span<const FlowField> flows,
                      std::span<const OcclusionMask> masks) {
  if (stylized.size() < 2) throw InvalidArgument("flicker_metric: need at least two frames");
  if (flows.size() != stylized.size() - 1 || masks.size() != flows.size()) {
    throw InvalidArgument("flicker_metric: expected one flow and mask per consecutive pair");
  }
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < stylized.size(); ++i) {
    const Tensor& cur = stylized[i + 1];
    if (cur.shape() != stylized[i].shape()) {
      throw InvalidArgument("flicker_metric: frame shapes differ");
    }
    const OcclusionMask& mask = masks[i];
    if (mask.height() != cur.h() || mask.width() != cur.w()) {
      throw InvalidArgument("flicker_metric: mask does not match frame");
    }
    const Tensor warped = warp(stylized[i], flows[i]);
    const std::size_t traceable = mask.traceable_count();
    if (traceable == 0) continue;
    double sum = 0.0;
    for (int n = 0; n < cur.n(); ++n)
      for (int c = 0; c < cur.c(); ++c)
        for (int y = 0; y < cur.h(); ++y)
          for (int x = 0; x < cur.w(); ++x) {
            if (!mask.traceable(y, x)) continue;
            const double d = double(cur.at(n, c, y, x)) - warped.at(n, c, y, x);
            sum += d * d;
          }
    total += sum / (static_cast<double>(traceable) * cur.c() * cur.n());
  }
  return total / static_cast<double>(stylized.size() - 1);
}

// --- training jobs ---------------------------------------------------------

TrainJob parse_train_config(std::string_view text, const std::string& source,
                            const fs::path& base_dir) {
  TrainJob job;
  std::set<std::string> seen;
  int line_no = 0;
  std::string_view rest = text;

  auto fail = [&](const std::string& msg) -> ConfigError {
    return ConfigError(source + ":" + std::to_string(line_no) + ": " + msg);
  };

  while (!rest.empty()) {
    ++line_no;
    const auto nl = rest.find('\n');
    std::string_view raw = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fail("expected key=value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw fail("missing key");
    if (!seen.insert(key).second) throw fail("duplicate key '" + key + "'");

    auto as_double = [&]() {
      double d = 0.0;
      const auto r = std::from_chars(value.data(), value.data() + value.size(), d);
      if (r.ec != std::errc{} || r.ptr != value.data() + value.size() || !std::isfinite(d)) {
        throw fail("'" + key + "' expects a number, got '" + value + "'");
      }
      return d;
    };
    auto as_int = [&]() {
      long long v = 0;
      const auto r = std::from_chars(value.data(), value.data() + value.size(), v);
      if (r.ec != std::errc{} || r.ptr != value.data() + value.size() || v < INT32_MIN ||
          v > INT32_MAX) {
        throw fail("'" + key + "' expects an integer, got '" + value + "'");
      }
      return static_cast<int>(v);
    };
    auto as_u64 = [&]() {
      std::uint64_t v = 0;
      const auto r = std::from_chars(value.data(), value.data() + value.size(), v);
      if (r.ec != std::errc{} || r.ptr != value.data() + value.size()) {
        throw fail("'" + key + "' expects an unsigned integer, got '" + value + "'");
      }
      return v;
    };
    auto as_path = [&]() {
      if (value.empty()) throw fail("'" + key + "' expects a path");
      fs::path p(value);
      return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };

    TrainingConfig& t = job.training;
    static const std::map<std::string, int, std::less<>> known = {
        {"style_image", 0}, {"style_size", 1}, {"extractor", 2}, {"extractor_seed", 3},
        {"alpha", 4}, {"beta", 5}, {"variant", 6}, {"init_seed", 7}, {"model", 8},
        {"content_weight", 9}, {"style_weight", 10}, {"tv_weight", 11},
        {"temporal_feature_weight", 12}, {"temporal_output_weight", 13},
        {"learning_rate", 14}, {"adam_beta1", 15}, {"adam_beta2", 16}, {"adam_eps", 17},
        {"steps", 18}, {"batch_size", 19}, {"width", 20}, {"height", 21},
        {"checkpoint_interval", 22}, {"checkpoint_dir", 23}, {"seed", 24},
        {"clip_norm", 25}, {"trace", 26}};
    const auto it = known.find(key);
    if (it == known.end()) throw fail("unknown key '" + key + "'");
    switch (it->second) {
      case 0: job.style_image = as_path(); break;
      case 1: job.style_size = as_int(); break;
      case 2:
        if (value.empty()) throw fail("'extractor' expects 'tiny' or a path");
        job.extractor = value == "tiny" ? value : as_path().string();
        break;
      case 3: job.extractor_seed = as_u64(); break;
      case 4: job.arch.alpha = static_cast<float>(as_double()); break;
      case 5: job.arch.beta = static_cast<float>(as_double()); break;
      case 6:
        try {
          job.arch.variant = parse_variant(value);
        } catch (const Error& e) {
          throw fail(e.what());
        }
        break;
      case 7: job.init_seed = as_u64(); break;
      case 8: job.model = as_path(); break;
      case 9: t.weights.content = as_double(); break;
      case 10: t.weights.style = as_double(); break;
      case 11: t.weights.tv = as_double(); break;
      case 12: t.weights.temporal_feature = as_double(); break;
      case 13: t.weights.temporal_output = as_double(); break;
      case 14: t.adam.learning_rate = as_double(); break;
      case 15: t.adam.beta1 = as_double(); break;
      case 16: t.adam.beta2 = as_double(); break;
      case 17: t.adam.eps = as_double(); break;
      case 18: t.steps = as_int(); break;
      case 19: t.batch_size = as_int(); break;
      case 20: t.width = as_int(); break;
      case 21: t.height = as_int(); break;
      case 22: t.checkpoint_interval = as_int(); break;
      case 23: t.checkpoint_dir = as_path(); break;
      case 24: t.seed = as_u64(); break;
      case 25: t.clip_norm = as_double(); break;
      case 26: job.trace = as_path(); break;
    }
  }

  if (job.style_image.empty()) {
    throw ConfigError(source + ": missing required field 'style_image'");
  }
  if (job.style_size < 8) throw ConfigError(source + ": 'style_size' must be at least 8");
  const auto& a = job.training.adam;
  if (!(a.learning_rate > 0.0) || !(a.beta1 >= 0.0 && a.beta1 < 1.0) ||
      !(a.beta2 >= 0.0 && a.beta2 < 1.0) || !(a.eps > 0.0)) {
    throw ConfigError(source + ": invalid optimizer settings");
  }
  try {
    job.arch.validate();
    job.training.validate();
  } catch (const Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return job;
}

TrainJob load_train_config(const fs::path& path) {
  const auto bytes = read_bytes(path);
  const std::string text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return parse_train_config(text, path.string(), path.parent_path());
}

Tensor prepare_style_image(const Tensor& image, int shorter_side) {
  if (shorter_side < 8) throw InvalidArgument("style size must be at least 8");
  const double scale = double(shorter_side) / std::min(image.h(), image.w());
  auto snap = [](double v) { return std::max(8, static_cast<int>(std::lround(v / 8.0)) * 8); };
  return resize_bilinear(image, snap(image.h() * scale), snap(image.w() * scale));
}

FeatureExtractor make_extractor(const TrainJob& job) {
  if (job.extractor == "tiny") return tiny_extractor(job.extractor_seed);
  return load_vgg16(job.extractor);
}

Tensor center_crop(const Tensor& t, int height, int width) {
  if (t.h() < height || t.w() < width) {
    throw InvalidArgument("center_crop: " + t.shape().str() + " smaller than " +
                          std::to_string(height) + "x" + std::to_string(width));
  }
  if (t.h() == height && t.w() == width) return t;
  const int y0 = (t.h() - height) / 2, x0 = (t.w() - width) / 2;
  Tensor out(t.n(), t.c(), height, width);
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) out.at(n, c, y, x) = t.at(n, c, y + y0, x + x0);
  return out;
}

FlowField center_crop(const FlowField& f, int height, int width) {
  if (f.height() < height || f.width() < width) {
    throw InvalidArgument("center_crop: flow smaller than target");
  }
  if (f.height() == height && f.width() == width) return f;
  const int y0 = (f.height() - height) / 2, x0 = (f.width() - width) / 2;
  FlowField out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.set(y, x, f.u(y + y0, x + x0), f.v(y + y0, x + x0));
  return out;
}

OcclusionMask center_crop(const OcclusionMask& m, int height, int width) {
  if (m.height() < height || m.width() < width) {
    throw InvalidArgument("center_crop: mask smaller than target");
  }
  const int y0 = (m.height() - height) / 2, x0 = (m.width() - width) / 2;
  OcclusionMask out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.set(y, x, m.traceable(y + y0, x + x0));
  return out;
}

std::vector<Tensor> load_training_frames(const fs::path& dir, int height, int width) {
  const auto paths = list_ppm(dir, true);
  if (paths.empty()) throw IoError(dir.string() + ": no .ppm frames");
  std::vector<Tensor> frames;
  frames.reserve(paths.size());
  for (const auto& p : paths) {
    Tensor t = read_ppm_file(p);
    if (t.h() != height || t.w() != width) t = resize_bilinear(t, height, width);
    frames.push_back(std::move(t));
  }
  return frames;
}

std::vector<PairSample> load_training_pairs(const fs::path& dir, int height, int width) {
  std::vector<fs::path> sequences;
  if (fs::is_directory(dir / "frames")) {
    sequences.push_back(dir);
  } else if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_directory() && fs::is_directory(e.path() / "frames")) sequences.push_back(e.path());
    }
    std::sort(sequences.begin(), sequences.end());
  } else {
    throw IoError(dir.string() + ": not a directory");
  }
  if (sequences.empty()) throw IoError(dir.string() + ": no sequences with a frames/ folder");

  std::vector<PairSample> pairs;
  for (const auto& seq_dir : sequences) {
    const FrameSequence seq = FrameSequence::scan(seq_dir / "frames");
    const auto frames = seq.load();
    for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
      const fs::path base = seq_dir / "flow" / pair_stem(k);
      const fs::path backward = base.string() + "_backward.flo";
      const fs::path forward = base.string() + "_forward.flo";
      const fs::path mask_path = base.string() + "_mask.pgm";
      if (!fs::exists(backward)) throw IoError(backward.string() + ": missing flow");
      const FlowField flow = read_flo_file(backward);
      OcclusionMask mask;
      if (fs::exists(mask_path)) {
        mask = read_mask_pgm(read_bytes(mask_path));
      } else if (fs::exists(forward)) {
        mask = occlusion_mask(flow, read_flo_file(forward));
      } else {
        throw IoError(base.string() + ": need " + mask_path.filename().string() + " or " +
                      forward.filename().string());
      }
      PairSample s{center_crop(frames[k], height, width), center_crop(frames[k + 1], height, width),
                   center_crop(flow, height, width), center_crop(mask, height, width)};
      s.validate();
      pairs.push_back(std::move(s));
    }
  }
  if (pairs.empty()) throw IoError(dir.string() + ": no consecutive frame pairs");
  return pairs;
}

void write_sequence(const SyntheticSequence& seq, const fs::path& dir) {
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "flow");
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    write_ppm_file(dir / "frames" / ("frame_" + pair_stem(t) + ".ppm"), seq.frames[t]);
  }
  for (std::size_t k = 0; k < seq.backward_flows.size(); ++k) {
    const fs::path base = dir / "flow" / pair_stem(k);
    write_flo_file(base.string() + "_backward.flo", seq.backward_flows[k]);
    write_flo_file(base.string() + "_forward.flo", seq.forward_flows[k]);
    write_bytes(base.string() + "_mask.pgm", write_mask_pgm(seq.masks[k]));
  }
}

namespace {

struct Prepared {
  FeatureExtractor extractor;
  StyleTarget target;
};

Prepared prepare(const TrainJob& job, std::ostream& log) {
  Prepared p{make_extractor(job), {}};
  const Tensor style = prepare_style_image(read_ppm_file(job.style_image), job.style_size);
  log << "style image " << job.style_image.string() << " at " << style.w() << "x" << style.h()
      << "\n";
  p.target = make_style_target(p.extractor, style);
  return p;
}

fs::path trace_path(const TrainJob& job, const fs::path& out_model) {
  return job.trace.empty() ? fs::path(out_model.string() + ".trace.csv") : job.trace;
}

void report(const TrainResult& r, std::ostream& log) {
  if (r.trace.empty()) {
    log << "no optimizer steps taken\n";
    return;
  }
  const auto& first = r.trace.front().terms;
  const auto& last = r.trace.back().terms;
  log << "steps " << r.trace.front().step << ".." << r.trace.back().step << " total loss "
      << first.total << " -> " << last.total << "\n";
}

}  // namespace

JobOutput run_train(const TrainJob& job, const fs::path& data_dir, const fs::path& out_model,
                    std::ostream& log) {
  const auto frames = load_training_frames(data_dir, job.training.height, job.training.width);
  log << frames.size() << " training frames\n";
  Prepared p = prepare(job, log);
  StyleNetModel model = job.model.empty() ? build(job.arch, job.init_seed) : load(job.model);
  JobOutput out{train_stage1(std::move(model), frames, p.extractor, p.target, job.training),
                out_model, trace_path(job, out_model)};
  save(out.result.model, out_model);
  write_trace_csv(out.trace, out.result.trace);
  report(out.result, log);
  return out;
}

JobOutput run_finetune(const TrainJob& job, const fs::path& data_dir, const fs::path& out_model,
                       std::ostream& log) {
  if (job.model.empty()) throw ConfigError("fine-tuning requires a starting 'model'");
  StyleNetModel model = load(job.model);
  const auto pairs = load_training_pairs(data_dir, job.training.height, job.training.width);
  log << pairs.size() << " frame pairs\n";
  Prepared p = prepare(job, log);
  JobOutput out{finetune_stage2(std::move(model), pairs, p.extractor, p.target, job.training),
                out_model, trace_path(job, out_model)};
  save(out.result.model, out_model);
  write_trace_csv(out.trace, out.result.trace);
  report(out.result, log);
  return out;
}

// --- stylize ---------------------------------------------------------------

StylizeReport stylize_directory(const StyleNetModel& model, const fs::path& in_dir,
                                const fs::path& out_dir, const StylizeOptions& options,
                                std::ostream* log) {
  if (options.workers < 1) throw InvalidArgument("workers must be at least 1");
  if (options.resize) {
    const auto [w, h] = *options.resize;
    if (w < 4 || h < 4 || w % 4 != 0 || h % 4 != 0) {
      throw InvalidArgument("resize extents must be positive multiples of 4");
    }
  }
  const auto inputs = list_ppm(in_dir, false);
  if (inputs.empty()) throw IoError(in_dir.string() + ": no .ppm frames");
  fs::create_directories(out_dir);

  StylizeReport rep;
  rep.outputs.resize(inputs.size());
  rep.frame_ms.resize(inputs.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= inputs.size()) return;
      try {
        Tensor frame = read_ppm_file(inputs[i]);
        const auto start = std::chrono::steady_clock::now();
        if (options.resize) {
          frame = resize_bilinear(frame, options.resize->second, options.resize->first);
        }
        const Tensor out = stylize(model, frame);
        rep.frame_ms[i] = elapsed_seconds(start) * 1e3;
        rep.outputs[i] = out_dir / inputs[i].filename();
        write_ppm_file(rep.outputs[i], out);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = inputs.size();
        return;
      }
    }
  };

  const int workers = std::min<int>(options.workers, static_cast<int>(inputs.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  if (log) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      *log << rep.outputs[i].filename().string() << " " << std::fixed << std::setprecision(2)
           << rep.frame_ms[i] << " ms\n";
    }
  }
  return rep;
}

// --- bench -----------------------------------------------------------------

BenchResult bench_model(const StyleNetModel& model, std::span<const Tensor> frames, int width,
                        int height, int loop, std::size_t min_frames) {
  if (frames.empty()) throw InvalidArgument("bench: no frames");
  if (loop < 1) throw InvalidArgument("bench: loop must be at least 1");
  const std::size_t total = frames.size() * static_cast<std::size_t>(loop);
  if (total < min_frames) {
    throw InvalidArgument("bench: " + std::to_string(total) + " frames, need at least " +
                          std::to_string(min_frames));
  }
  BenchResult r{model.config, param_count(model.config), width, height, total, 0.0, 0.0};
  volatile float sink = 0.0f;
  for (int pass = 0; pass < loop; ++pass) {
    for (const Tensor& f : frames) {
      const auto start = std::chrono::steady_clock::now();
      const Tensor input =
          f.h() == height && f.w() == width ? f : resize_bilinear(f, height, width);
      const auto fwd_start = std::chrono::steady_clock::now();
      StyleNetOutput out = forward(model, input);
      r.forward_seconds += elapsed_seconds(fwd_start);
      const Tensor img = clamp(out.image, 0.0f, 1.0f);
      r.total_seconds += elapsed_seconds(start);
      sink = sink + img.data()[0];
    }
  }
  return r;
}

std::vector<ArchConfig> parse_config_list(std::string_view text) {
  const std::string all = trim(text);
  if (all == "all") return size_study_configs();
  std::vector<ArchConfig> out;
  std::string_view rest = all;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string item = trim(rest.substr(0, comma));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    if (item.empty()) throw InvalidArgument("empty entry in configuration list");
    std::vector<std::string> parts;
    std::stringstream ss(item);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(trim(part));
    if (parts.size() < 2 || parts.size() > 3) {
      throw InvalidArgument("configuration '" + item + "' must be alpha:beta[:variant]");
    }
    ArchConfig c;
    auto num = [&](const std::string& s) {
      double d = 0.0;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), d);
      if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw InvalidArgument("configuration '" + item + "': bad number '" + s + "'");
      }
      return static_cast<float>(d);
    };
    c.alpha = num(parts[0]);
    c.beta = num(parts[1]);
    if (parts.size() == 3) c.variant = parse_variant(parts[2]);
    c.validate();
    out.push_back(c);
  }
  if (out.empty()) throw InvalidArgument("empty configuration list");
  return out;
}

std::string host_description() {
  std::string cpu = "unknown cpu";
  if (std::ifstream info("/proc/cpuinfo"); info) {
    for (std::string line; std::getline(info, line);) {
      if (line.rfind("model name", 0) == 0) {
        if (const auto colon = line.find(':'); colon != std::string::npos) {
          cpu = trim(std::string_view(line).substr(colon + 1));
        }
        break;
      }
    }
  }
  std::ostringstream out;
  out << cpu << "; " << std::thread::hardware_concurrency() << " hw threads; single-threaded; "
#if defined(__clang__)
      << "clang " << __clang_version__;
#elif defined(__GNUC__)
      << "gcc " << __VERSION__;
#else
      << "unknown compiler";
#endif
  return out.str();
}

void write_bench_csv(std::ostream& out, std::span<const BenchResult> rows,
                     const std::string& host) {
  std::string clean = host;
  std::replace(clean.begin(), clean.end(), '\n', ' ');
  out << "# host: " << clean << "\n";
  out << "config,alpha,beta,variant,params,log10_params,width,height,frames,fps,forward_fps\n";
  for (const auto& r : rows) {
    out << r.config.label() << ',' << r.config.alpha << ',' << r.config.beta << ','
        << to_string(r.config.variant) << ',' << r.params << ',' << std::setprecision(6)
        << std::log10(double(r.params)) << ',' << r.width << ',' << r.height << ',' << r.frames
        << ',' << std::setprecision(6) << r.fps() << ',' << r.forward_fps() << "\n";
  }
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (double(i) + double(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw InvalidArgument("spearman: need two equal-length samples of size >= 2");
  }
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0 || vb == 0) throw InvalidArgument("spearman: constant sample");
  return cov / std::sqrt(va * vb);
}

// --- inspect ---------------------------------------------------------------

SizeRow size_row(const ArchConfig& config) {
  SizeRow row;
  row.config = config;
  row.params = param_count(config);
  const std::size_t ref = reconet_reference_count();
  row.params_percent = 100.0 * double(row.params) / double(ref);
  row.megabytes = size_estimate(config).megabytes;
  auto round2 = [](double v) { return std::round(v * 100.0) / 100.0; };
  row.size_percent =
      100.0 * round2(row.megabytes) / round2(size_estimate_for_count(ref).megabytes);
  return row;
}

std::string format_size_table(std::span<const SizeRow> rows) {
  std::ostringstream out;
  out << std::left << std::setw(30) << "config" << std::right << std::setw(12) << "params"
      << std::setw(10) << "% params" << std::setw(10) << "MB" << std::setw(10) << "% size"
      << "\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(30) << r.config.label() << std::right << std::setw(12)
        << r.params << std::fixed << std::setprecision(2) << std::setw(10) << r.params_percent
        << std::setw(10) << r.megabytes << std::setw(10) << r.size_percent << "\n";
    out.unsetf(std::ios::fixed);
  }
  return out.str();
}

}  // namespace styleforge
