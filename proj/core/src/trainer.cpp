#include "styleforge/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>

#include "styleforge/error.hpp"
#include "styleforge/kstm.hpp"

namespace styleforge {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config) {
  if (params.size() != grads.size()) {
    throw InvalidArgument("adam_step: parameter and gradient counts differ");
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw InvalidArgument("adam_step: optimizer state does not match the parameters");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    if (g.shape() != p.shape() || m.shape() != p.shape()) {
      throw InvalidArgument("adam_step: shape mismatch for parameter " + std::to_string(k));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      const double vi = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update =
          config.learning_rate * (mi / correction1) / (std::sqrt(vi / correction2) + config.eps);
      p[i] = static_cast<float>(p[i] - update);
    }
  }
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (float v : g.data()) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float factor = static_cast<float>(max_norm / norm);
    for (Tensor& g : grads)
      for (float& v : g.data()) v *= factor;
  }
  return norm;
}

void TrainingConfig::validate() const {
  weights.validate();
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
  if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
    throw ConfigError("training resolution " + std::to_string(width) + "x" +
                      std::to_string(height) + " must be divisible by 8");
  }
  if (!(adam.learning_rate > 0.0) || !(adam.eps > 0.0) || adam.beta1 < 0.0 ||
      adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0) {
    throw ConfigError("invalid Adam settings");
  }
}

void write_trace_csv(std::ostream& out, const LossTrace& trace) {
  out << "step,content,style,tv,temp_f,temp_o,total\n";
  out << std::setprecision(9);
  for (const TraceRow& r : trace) {
    out << r.step << ',' << r.terms.content << ',' << r.terms.style << ',' << r.terms.tv << ','
        << r.terms.temporal_feature << ',' << r.terms.temporal_output << ',' << r.terms.total
        << '\n';
  }
}

void write_trace_csv(const std::filesystem::path& path, const LossTrace& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_trace_csv(out, trace);
  if (!out) throw IoError("write failed for " + path.string());
}

void PairSample::validate() const {
  const Shape& s = current.shape();
  if (previous.shape() != s || s.n != 1 || s.c != 3) {
    throw InvalidArgument("pair sample: frames must both be (1, 3, h, w) of equal size");
  }
  if (flow.height() != s.h || flow.width() != s.w) {
    throw InvalidArgument("pair sample: flow extent does not match frames " + s.str());
  }
  if (mask.height() != s.h || mask.width() != s.w) {
    throw InvalidArgument("pair sample: mask extent does not match frames " + s.str());
  }
}

std::size_t sample_index(std::uint64_t seed, std::int64_t step, int slot, int batch,
                         std::size_t count) {
  if (count == 0) throw InvalidArgument("sample_index: empty source");
  const auto k = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch) +
                 static_cast<std::uint64_t>(slot);
  const std::uint64_t epoch = k / count;
  const std::uint64_t position = k % count;
  std::vector<std::size_t> perm(count);
  for (std::size_t i = 0; i < count; ++i) perm[i] = i;
  SplitMix64 rng(seed ^ (0xD1B54A32D192ED03ULL * (epoch + 1)));
  for (std::size_t i = count; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm[position];
}

namespace {

void check_frame(const Tensor& t, const TrainingConfig& config, const char* what) {
  if (t.shape() != Shape{1, 3, config.height, config.width}) {
    throw InvalidArgument(std::string(what) + " has shape " + t.shape().str() + ", expected " +
                          Shape{1, 3, config.height, config.width}.str());
  }
}

struct StepAccumulator {
  std::vector<Tensor> grads;
  LossTerms terms;

  explicit StepAccumulator(const StyleNetModel& model) {
    for (const NamedConstParam& p : model.parameters()) grads.emplace_back(p.tensor->shape());
  }

  void add(const Tape<float>& tape, const ParameterBinding<float>& params, const LossTerms& t,
           float weight) {
    const auto& vars = params.vars();
    for (std::size_t k = 0; k < vars.size(); ++k) {
      const Tensor& g = tape.grad(vars[k]);
      if (g.empty()) continue;
      for (std::size_t i = 0; i < g.size(); ++i) grads[k][i] += weight * g[i];
    }
    terms.content += weight * t.content;
    terms.style += weight * t.style;
    terms.tv += weight * t.tv;
    terms.temporal_feature += weight * t.temporal_feature;
    terms.temporal_output += weight * t.temporal_output;
    terms.total += weight * t.total;
  }
};

std::string checkpoint_stem(const char* stage, std::int64_t step) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_step%06lld", stage, static_cast<long long>(step));
  return buf;
}

// Shared optimization loop; `sample_step` builds the objective for one batch
// slot on a fresh tape and returns the loss terms after backward().
template <class SampleStep>
TrainResult optimize(StyleNetModel model, std::size_t sample_count, const char* stage,
                     const TrainingConfig& config, std::optional<AdamState> resume,
                     SampleStep&& sample_step) {
  TrainResult result;
  if (resume) result.optimizer = std::move(*resume);
  const float slot_weight = 1.0f / static_cast<float>(config.batch_size);
  std::vector<Tensor*> params;
  for (const NamedParam& p : model.parameters()) params.push_back(p.tensor);

  for (std::int64_t step = result.optimizer.step; step < config.steps; ++step) {
    StepAccumulator acc(model);
    for (int slot = 0; slot < config.batch_size; ++slot) {
      const std::size_t index =
          sample_index(config.seed, step, slot, config.batch_size, sample_count);
      Tape<float> tape;
      const ParameterBinding<float> bound = bind_parameters(tape, model, true);
      const LossTerms terms = sample_step(tape, bound, model, index);
      acc.add(tape, bound, terms, slot_weight);
    }
    if (!std::isfinite(acc.terms.total)) {
      throw Error(std::string(stage) + ": non-finite loss at step " + std::to_string(step));
    }
    for (const Tensor& g : acc.grads) {
      if (!g.all_finite()) {
        throw Error(std::string(stage) + ": non-finite gradient at step " + std::to_string(step));
      }
    }
    clip_global_norm(acc.grads, config.clip_norm);
    adam_step(params, acc.grads, result.optimizer, config.adam);
    result.trace.push_back({step, acc.terms});

    const std::int64_t done = step + 1;
    if (config.checkpoint_interval > 0 && !config.checkpoint_dir.empty() &&
        done % config.checkpoint_interval == 0) {
      std::filesystem::create_directories(config.checkpoint_dir);
      const std::string stem = checkpoint_stem(stage, done);
      save(model, config.checkpoint_dir / (stem + ".kstm"));
      save_optimizer(model, result.optimizer, config.checkpoint_dir / (stem + ".adam.kstm"));
    }
  }
  result.model = std::move(model);
  return result;
}

}  // namespace

TrainResult train_stage1(StyleNetModel model, std::span<const Tensor> frames,
                         const FeatureExtractor& extractor, const StyleTarget& target,
                         const TrainingConfig& config, std::optional<AdamState> resume) {
  config.validate();
  if (frames.empty()) throw InvalidArgument("train_stage1: no training frames");
  for (const Tensor& f : frames) check_frame(f, config, "training frame");

  std::vector<TapMap> content;
  content.reserve(frames.size());
  for (const Tensor& f : frames) content.push_back(extract(extractor, f));

  auto step = [&](Tape<float>& tape, const ParameterBinding<float>& params,
                  const StyleNetModel& m, std::size_t i) {
    const ParameterBinding<float> frozen = bind_parameters(tape, extractor);
    const StyleNetVars out = forward(tape, params, m, tape.input(frames[i]));
    const TapVars taps = extract(tape, frozen, extractor, out.image);
    const ObjectiveVars obj =
        stage1_objective(tape, out.image, taps, content[i], target, config.weights);
    tape.backward(obj.total);
    return read_terms(tape, obj);
  };
  return optimize(std::move(model), frames.size(), "stage1", config, std::move(resume), step);
}

TrainResult finetune_stage2(StyleNetModel model, std::span<const PairSample> pairs,
                            const FeatureExtractor& extractor, const StyleTarget& target,
                            const TrainingConfig& config, std::optional<AdamState> resume) {
  config.validate();
  if (pairs.empty()) throw InvalidArgument("finetune_stage2: no training pairs");
  struct Prepared {
    TapMap previous_taps;
    TapMap current_taps;
    FlowField flow_down;
    OcclusionMask mask_down;
  };
  std::vector<Prepared> prepared;
  prepared.reserve(pairs.size());
  for (const PairSample& p : pairs) {
    p.validate();
    check_frame(p.current, config, "training pair frame");
    prepared.push_back({extract(extractor, p.previous), extract(extractor, p.current),
                        downsample_flow(p.flow, 4), downsample_mask(p.mask, 4)});
  }

  auto step = [&](Tape<float>& tape, const ParameterBinding<float>& params,
                  const StyleNetModel& m, std::size_t i) {
    const PairSample& pair = pairs[i];
    const Prepared& prep = prepared[i];
    const ParameterBinding<float> frozen = bind_parameters(tape, extractor);
    auto frame = [&](const Tensor& input, const TapMap& content_taps) {
      const StyleNetVars out = forward(tape, params, m, tape.input(input));
      FrameVars fv;
      fv.input = &input;
      fv.content_taps = &content_taps;
      fv.output = out.image;
      fv.features = out.features;
      fv.output_taps = extract(tape, frozen, extractor, out.image);
      return fv;
    };
    const FrameVars previous = frame(pair.previous, prep.previous_taps);
    const FrameVars current = frame(pair.current, prep.current_taps);
    const ObjectiveVars obj =
        stage2_objective(tape, previous, current, pair.flow, prep.flow_down, pair.mask,
                         prep.mask_down, target, config.weights);
    tape.backward(obj.total);
    return read_terms(tape, obj);
  };
  return optimize(std::move(model), pairs.size(), "stage2", config, std::move(resume), step);
}

LossTerms evaluate_stage1(const StyleNetModel& model, std::span<const Tensor> frames,
                          const FeatureExtractor& extractor, const StyleTarget& target,
                          const LossWeights& weights) {
  if (frames.empty()) throw InvalidArgument("evaluate_stage1: no frames");
  LossTerms mean;
  const double w = 1.0 / static_cast<double>(frames.size());
  for (const Tensor& f : frames) {
    const StyleNetOutput out = forward(model, f);
    const LossTerms t =
        total_stage1(out.image, extract(extractor, out.image), extract(extractor, f), target,
                     weights);
    mean.content += w * t.content;
    mean.style += w * t.style;
    mean.tv += w * t.tv;
    mean.total += w * t.total;
  }
  return mean;
}

void save_optimizer(const StyleNetModel& model, const AdamState& state,
                    const std::filesystem::path& path) {
  kstm::Container c;
  c.alpha = model.config.alpha;
  c.beta = model.config.beta;
  c.variant = static_cast<std::uint8_t>(model.config.variant);
  const auto params = model.parameters();
  if (!state.m.empty() && state.m.size() != params.size()) {
    throw InvalidArgument("save_optimizer: state does not match the model");
  }
  // The step counter is split into two exactly representable halves.
  const auto step = static_cast<std::uint64_t>(state.step);
  c.tensors.push_back({"adam.step", {2},
                       {static_cast<float>(step & 0xFFFFFF), static_cast<float>(step >> 24)}});
  for (std::size_t k = 0; k < state.m.size(); ++k) {
    c.tensors.push_back(kstm::from_tensor(params[k].name + ".m", state.m[k], params[k].rank));
    c.tensors.push_back(kstm::from_tensor(params[k].name + ".v", state.v[k], params[k].rank));
  }
  kstm::write_file(path, c);
}

AdamState load_optimizer(const StyleNetModel& model, const std::filesystem::path& path) {
  const kstm::Container c = kstm::read_file(path);
  AdamState state;
  const Tensor step = kstm::to_tensor(c.get("adam.step"), Shape{1, 2, 1, 1});
  state.step = static_cast<std::int64_t>(step[0]) + (static_cast<std::int64_t>(step[1]) << 24);
  if (c.tensors.size() == 1) return state;
  for (const NamedConstParam& p : model.parameters()) {
    state.m.push_back(kstm::to_tensor(c.get(p.name + ".m"), p.tensor->shape()));
    state.v.push_back(kstm::to_tensor(c.get(p.name + ".v"), p.tensor->shape()));
  }
  return state;
}

std::vector<double> smoothed_totals(const LossTrace& trace, std::size_t window) {
  if (window == 0) throw InvalidArgument("smoothed_totals: window must be >= 1");
  std::vector<double> out(trace.size());
  double running = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    running += trace[i].terms.total;
    if (i >= window) running -= trace[i - window].terms.total;
    out[i] = running / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

}  // namespace styleforge
