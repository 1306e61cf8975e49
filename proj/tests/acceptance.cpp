// Acceptance runner: one PASS/FAIL line per criterion.
//
//   styleforge_acceptance [N ...]     run the listed criteria (default: all)

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "styleforge/autograd.hpp"
#include "styleforge/error.hpp"
#include "styleforge/flow.hpp"
#include "styleforge/image_io.hpp"
#include "styleforge/losses.hpp"
#include "styleforge/ops.hpp"
#include "styleforge/perceptual.hpp"
#include "styleforge/pipeline.hpp"
#include "styleforge/stylenet.hpp"
#include "styleforge/trainer.hpp"
#include "support.hpp"

using namespace styleforge;
using namespace sf_test;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> extra;  ///< supplementary lines, printed after the verdict

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<std::byte> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  if (!raw.empty()) std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

std::string run_capture(const std::string& cmd, int* status) {
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    *status = -1;
    return out;
  }
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  *status = pclose(pipe);
  return out;
}

// --- 1: size table ------------------------------------------------------------

struct ReferenceRow {
  double alpha, beta;
  int params_k;
  double percent, megabytes, size_percent;
};

// Reference table rows in table order.
constexpr std::array<ReferenceRow, 15> kReferenceRows = {{
    {1.000, 1, 470, 15.16, 1.79, 15.14},
    {0.750, 1, 267, 8.64, 1.02, 8.63},
    {0.500, 1, 122, 3.94, 0.47, 3.98},
    {0.250, 1, 33, 1.06, 0.12, 1.02},
    {0.125, 1, 9, 0.30, 0.04, 0.34},
    {1.000, 0.75, 307, 9.93, 1.17, 9.90},
    {0.750, 0.75, 173, 5.61, 0.66, 5.58},
    {0.500, 0.75, 78, 2.51, 0.30, 2.54},
    {0.250, 0.75, 20, 0.64, 0.08, 0.68},
    {0.125, 0.75, 5, 0.17, 0.02, 0.17},
    {1.000, 0.5, 233, 7.54, 0.89, 7.53},
    {0.750, 0.5, 131, 4.26, 0.50, 4.23},
    {0.500, 0.5, 59, 1.91, 0.23, 1.95},
    {0.250, 0.5, 15, 0.49, 0.06, 0.51},
    {0.125, 0.5, 4, 0.13, 0.02, 0.17},
}};

struct TableRow {
  std::string label;
  long params = 0;
  double percent = 0, megabytes = 0, size_percent = 0;
};

std::vector<TableRow> parse_inspect(const std::string& text) {
  std::vector<TableRow> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.size() < 7) continue;
    TableRow r;
    const std::size_t n = tok.size();
    r.label = tok[0] + " " + tok[1] + " " + tok[2];
    r.params = std::stol(tok[n - 4]);
    r.percent = std::stod(tok[n - 3]);
    r.megabytes = std::stod(tok[n - 2]);
    r.size_percent = std::stod(tok[n - 1]);
    rows.push_back(r);
  }
  return rows;
}

Outcome criterion1() {
  Outcome o;
  int status = 0;
  const std::string text = run_capture(std::string(STYLEFORGE_CLI) + " inspect --all", &status);
  o.require(status == 0, "inspect --all failed");
  const auto rows = parse_inspect(text);
  const auto configs = size_study_configs();
  o.require(rows.size() == kReferenceRows.size(), fmt("%zu rows printed", rows.size()));
  if (rows.size() != kReferenceRows.size()) return o;

  int rounded_ok = 0, relaxed_ok = 0, percent_ok = 0, mb_ok = 0, size_ok = 0;
  std::string mismatches;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ReferenceRow& p = kReferenceRows[i];
    const TableRow& r = rows[i];
    const ArchConfig& c = configs[i];
    o.require(std::abs(c.alpha - p.alpha) < 1e-6 && std::abs(c.beta - p.beta) < 1e-6 &&
                  r.label == c.label(),
              "row " + std::to_string(i + 1) + " is " + r.label);
    const long nearest = (r.params + 500) / 1000;
    const long floor = r.params / 1000;
    if (nearest == p.params_k) {
      ++rounded_ok;
    } else {
      mismatches += fmt(" #%zu:%ld->%ldk(expected %dk)", i + 1, r.params, nearest, p.params_k);
    }
    if (nearest == p.params_k || floor == p.params_k) ++relaxed_ok;
    if (std::abs(r.percent - p.percent) <= 0.02 + 1e-9) ++percent_ok;
    if (std::abs(r.megabytes - p.megabytes) <= 0.01 + 1e-9) ++mb_ok;
    if (std::abs(r.size_percent - p.size_percent) <= 0.02 + 1e-9) ++size_ok;
  }
  const SizeEstimate base = size_estimate_for_count(reconet_reference_count());
  o.require(reconet_reference_count() == 3098307, "reference count");
  o.require(std::abs(base.megabytes - 11.82) <= 0.005, fmt("reference %.3f MB", base.megabytes));
  o.require(rounded_ok == 15, fmt("params nearest-thousand %d/15:%s", rounded_ok, mismatches.c_str()));
  o.require(percent_ok == 15, fmt("%% params %d/15", percent_ok));
  o.require(mb_ok == 15, fmt("MB %d/15", mb_ok));
  o.require(size_ok == 15, fmt("%% size %d/15", size_ok));
  if (o.pass) o.detail = "15/15 rows: params, % params, MB, % size";
  o.extra.push_back(fmt("params within floor-or-nearest thousand: %d/15 %s", relaxed_ok,
                        relaxed_ok == 15 ? "PASS" : "FAIL"));
  return o;
}

// --- 2: dual-path count -----------------------------------------------------

Outcome criterion2() {
  Outcome o;
  int ok = 0;
  for (const ArchConfig& c : size_study_configs()) {
    const StyleNetModel m = build(c, 1);
    std::size_t allocated = 0;
    for (const NamedConstParam& p : m.parameters()) allocated += p.tensor->size();
    o.require(allocated == m.allocated_scalars(), c.label() + ": allocated_scalars disagrees");
    const std::size_t counted = param_count(c);
    const std::size_t oracle = count_oracle(c);
    if (allocated == counted && counted == oracle) {
      ++ok;
    } else {
      o.require(false, fmt("%s: count %zu, allocated %zu, layer list %zu", c.label().c_str(),
                           counted, allocated, oracle));
    }
  }
  if (o.pass) o.detail = fmt("%d/15 configs: param_count == allocated == layer list", ok);
  return o;
}

// --- 3: numerical core ------------------------------------------------------

OcclusionMask random_mask(int h, int w, std::uint64_t seed) {
  OcclusionMask m(h, w);
  std::mt19937_64 rng(seed);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(y, x, rng() % 4 != 0);
  return m;
}

using GradFn = std::function<double(const std::vector<TensorD>&, std::vector<TensorD>*)>;

// Worst relative error over all inputs of f.
double grad_check(const GradFn& f, const std::vector<TensorD>& inputs) {
  std::vector<TensorD> analytic;
  f(inputs, &analytic);
  double worst = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto g = [&](const TensorD& t) {
      auto q = inputs;
      q[i] = t;
      return f(q, nullptr);
    };
    worst = std::max(worst, relative_error(analytic[i], numeric_gradient(g, inputs[i], 1e-6)));
  }
  return worst;
}

// Wraps a tape expression of the given inputs as a GradFn.
GradFn on_tape(std::function<Var(Tape<double>&, const std::vector<Var>&)> build_loss) {
  return [build_loss](const std::vector<TensorD>& in, std::vector<TensorD>* grads) {
    Tape<double> tape;
    std::vector<Var> v;
    for (const TensorD& t : in) v.push_back(tape.input(t, grads != nullptr));
    const Var loss = build_loss(tape, v);
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (Var x : v) grads->push_back(tape.grad(x));
    }
    return scalar(tape, loss);
  };
}

double content_oracle(const TensorD& a, const TensorD& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / double(a.size());
}

double style_term_oracle(const TensorD& f, const TensorD& target) {
  const auto g = gram_oracle(f);
  double s = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double d = g[i][j] - target.at(0, 0, int(i), int(j));
      s += d * d;
    }
  return s;
}

double temporal_output_oracle(const TensorD& o, const TensorD& op, const TensorD& in,
                              const TensorD& inp, const FlowField& f, const OcclusionMask& m) {
  const TensorD wo = warp_oracle(op, f), wi = warp_oracle(inp, f);
  const double k[3] = {0.2126, 0.7152, 0.0722};
  double s = 0, n = 0;
  for (int y = 0; y < o.h(); ++y)
    for (int x = 0; x < o.w(); ++x) {
      if (!m.traceable(y, x)) continue;
      double yi = 0;
      for (int c = 0; c < 3; ++c) yi += k[c] * (in.at(0, c, y, x) - wi.at(0, c, y, x));
      for (int c = 0; c < o.c(); ++c) {
        const double d = (o.at(0, c, y, x) - wo.at(0, c, y, x)) - yi;
        s += d * d;
        n += 1;
      }
    }
  return n > 0 ? s / n : 0.0;
}

double temporal_feature_oracle(const TensorD& f, const TensorD& fp, const FlowField& flow,
                               const OcclusionMask& m) {
  const TensorD w = warp_oracle(fp, flow);
  double s = 0, n = 0;
  for (int c = 0; c < f.c(); ++c)
    for (int y = 0; y < f.h(); ++y)
      for (int x = 0; x < f.w(); ++x) {
        if (!m.traceable(y, x)) continue;
        const double d = f.at(0, c, y, x) - w.at(0, c, y, x);
        s += d * d;
        n += 1;
      }
  return n > 0 ? s / n : 0.0;
}

Outcome criterion3() {
  Outcome o;
  double worst_grad = 0;
  std::string worst_name;
  auto check = [&](const std::string& name, const GradFn& f, const std::vector<TensorD>& in) {
    const double e = grad_check(f, in);
    if (e >= 1e-4) o.require(false, fmt("%s gradient rel err %.3g", name.c_str(), e));
    if (e >= worst_grad) {
      worst_grad = e;
      worst_name = name;
    }
  };

  for (int stride : {1, 2}) {
    for (Padding pad : {Padding::reflect, Padding::zero}) {
      const TensorD r = random_tensor<double>(Shape{1, 4, 8 / stride, 8 / stride}, 9);
      check(fmt("conv s%d", stride),
            on_tape([&](Tape<double>& t, const std::vector<Var>& v) {
              return t.sum(t.mul(t.conv2d(v[0], v[1], v[2], stride, pad), r));
            }),
            {random_tensor<double>(Shape{1, 3, 8, 8}, 1), random_tensor<double>(Shape{4, 3, 3, 3}, 2),
             random_tensor<double>(Shape{1, 4, 1, 1}, 3)});
    }
  }
  {
    const TensorD r = random_tensor<double>(Shape{1, 3, 6, 8}, 4);
    check("instance_norm",
          on_tape([&](Tape<double>& t, const std::vector<Var>& v) {
            return t.sum(t.mul(t.instance_norm(v[0], v[1], v[2]), r));
          }),
          {random_tensor<double>(Shape{1, 3, 6, 8}, 5), random_tensor<double>(Shape{1, 3, 1, 1}, 6, 0.5, 1.5),
           random_tensor<double>(Shape{1, 3, 1, 1}, 7)});
  }
  {
    const FlowField f = random_flow(8, 8, 11, 2.5);
    const TensorD r = random_tensor<double>(Shape{1, 2, 8, 8}, 12);
    check("warp",
          on_tape([&](Tape<double>& t, const std::vector<Var>& v) {
            return t.sum(t.mul(warp(t, v[0], f), r));
          }),
          {random_tensor<double>(Shape{1, 2, 8, 8}, 13)});
  }
  {
    const TensorD target = random_tensor<double>(Shape{1, 4, 6, 6}, 14);
    check("content", on_tape([&](Tape<double>& t, const std::vector<Var>& v) {
            return content_loss(t, v[0], target);
          }),
          {random_tensor<double>(Shape{1, 4, 6, 6}, 15)});
  }
  {
    std::map<std::string, TensorD, std::less<>> grams{
        {"a", gram(random_tensor<double>(Shape{1, 3, 5, 5}, 16))},
        {"b", gram(random_tensor<double>(Shape{1, 4, 4, 4}, 17))}};
    check("style", on_tape([&](Tape<double>& t, const std::vector<Var>& v) {
            return style_loss(t, {{"a", v[0]}, {"b", v[1]}}, grams);
          }),
          {random_tensor<double>(Shape{1, 3, 5, 5}, 18), random_tensor<double>(Shape{1, 4, 4, 4}, 19)});
  }
  check("tv", on_tape([](Tape<double>& t, const std::vector<Var>& v) { return tv_loss(t, v[0]); }),
        {random_tensor<double>(Shape{1, 3, 7, 8}, 20)});
  {
    const FlowField f = random_flow(6, 6, 21, 2.0);
    const OcclusionMask m = random_mask(6, 6, 22);
    check("temporal_feature", on_tape([&](Tape<double>& t, const std::vector<Var>& v) {
            return temporal_feature_loss(t, v[0], v[1], f, m);
          }),
          {random_tensor<double>(Shape{1, 4, 6, 6}, 23), random_tensor<double>(Shape{1, 4, 6, 6}, 24)});
  }
  {
    const FlowField f = random_flow(8, 8, 25, 2.0);
    const OcclusionMask m = random_mask(8, 8, 26);
    const TensorD in = random_tensor<double>(Shape{1, 3, 8, 8}, 27, 0, 1);
    const TensorD inp = random_tensor<double>(Shape{1, 3, 8, 8}, 28, 0, 1);
    check("temporal_output", on_tape([&](Tape<double>& t, const std::vector<Var>& v) {
            return temporal_output_loss(t, v[0], v[1], in, inp, f, m);
          }),
          {random_tensor<double>(Shape{1, 3, 8, 8}, 29), random_tensor<double>(Shape{1, 3, 8, 8}, 30)});
  }

  // brute-force oracles, 100 random cases each
  double conv_err = 0, warp_err = 0, loss_err = 0;
  std::mt19937_64 rng(2024);
  auto pick = [&](int lo, int hi) { return int(lo + rng() % (hi - lo + 1)); };
  for (int i = 0; i < 100; ++i) {
    const int cin = pick(1, 4), cout = pick(1, 5), k = 2 * pick(0, 2) + 1, stride = pick(1, 2);
    const int h = pick(std::max(k, 2), 9), w = pick(std::max(k, 2), 9);
    const Padding pad = i % 2 ? Padding::reflect : Padding::zero;
    const TensorD x = random_tensor<double>(Shape{1, cin, h, w}, 100 + i);
    const TensorD wt = random_tensor<double>(Shape{cout, cin, k, k}, 300 + i);
    const TensorD b = random_tensor<double>(Shape{1, cout, 1, 1}, 500 + i);
    conv_err = std::max(conv_err,
                        max_abs_diff(conv2d(x, wt, b, stride, pad), conv_oracle(x, wt, b, stride, pad)));

    const FlowField f = random_flow(h, w, 700 + i, 4.0);
    const TensorD img = random_tensor<double>(Shape{1, cin, h, w}, 900 + i);
    warp_err = std::max(warp_err, max_abs_diff(warp(img, f), warp_oracle(img, f)));

    const TensorD a = random_tensor<double>(Shape{1, 3, h, w}, 1100 + i);
    const TensorD ap = random_tensor<double>(Shape{1, 3, h, w}, 1300 + i);
    const TensorD in = random_tensor<double>(Shape{1, 3, h, w}, 1500 + i, 0, 1);
    const TensorD inp = random_tensor<double>(Shape{1, 3, h, w}, 1700 + i, 0, 1);
    const OcclusionMask m = random_mask(h, w, 1900 + i);
    const TensorD target = gram(random_tensor<double>(Shape{1, 3, h, w}, 2100 + i));
    Tape<double> tape;
    const Var va = tape.input(a), vap = tape.input(ap);
    const std::pair<double, double> pairs[] = {
        {scalar(tape, content_loss(tape, va, ap)), content_oracle(a, ap)},
        {scalar(tape, style_loss(tape, {{"t", va}}, {{"t", target}})), style_term_oracle(a, target)},
        {scalar(tape, tv_loss(tape, va)), tv_oracle(a)},
        {scalar(tape, temporal_feature_loss(tape, va, vap, f, m)),
         temporal_feature_oracle(a, ap, f, m)},
        {scalar(tape, temporal_output_loss(tape, va, vap, in, inp, f, m)),
         temporal_output_oracle(a, ap, in, inp, f, m)},
    };
    for (const auto& [got, want] : pairs) loss_err = std::max(loss_err, std::abs(got - want));
  }
  o.require(conv_err < 1e-6, fmt("conv oracle max diff %.3g", conv_err));
  o.require(warp_err < 1e-6, fmt("warp oracle max diff %.3g", warp_err));
  o.require(loss_err < 1e-6, fmt("loss oracle max diff %.3g", loss_err));
  if (o.pass) {
    o.detail = fmt("worst gradient rel err %.2g (%s); oracles over 100 cases: conv %.2g, warp %.2g, "
                   "losses %.2g",
                   worst_grad, worst_name.c_str(), conv_err, warp_err, loss_err);
  }
  return o;
}

// --- 4: formats and occlusion ----------------------------------------------

Outcome criterion4() {
  Outcome o;
  int flo_ok = 0, ppm_ok = 0, pgm_ok = 0;
  std::mt19937_64 rng(44);
  for (int i = 0; i < 50; ++i) {
    const int h = 1 + int(rng() % 20), w = 1 + int(rng() % 20);
    const FlowField f = random_flow(h, w, 40 + i, 50.0);
    const auto bytes = write_flo(f);
    if (read_flo(bytes) == f && write_flo(read_flo(bytes)) == bytes) ++flo_ok;

    std::vector<std::byte> ppm;
    const std::string head = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (char c : head) ppm.push_back(std::byte(c));
    for (int k = 0; k < 3 * h * w; ++k) ppm.push_back(std::byte(rng() & 0xff));
    if (write_ppm(read_ppm(ppm)) == ppm) ++ppm_ok;

    OcclusionMask m = random_mask(h, w, 60 + i);
    const auto pgm = write_mask_pgm(m);
    if (read_mask_pgm(pgm) == m && write_mask_pgm(read_mask_pgm(pgm)) == pgm) ++pgm_ok;
  }
  o.require(flo_ok == 50, fmt(".flo round-trip %d/50", flo_ok));
  o.require(ppm_ok == 50, fmt("PPM round-trip %d/50", ppm_ok));
  o.require(pgm_ok == 50, fmt("PGM round-trip %d/50", pgm_ok));

  // Truth table on a 1x8 strip.
  FlowField a(1, 8), b(1, 8);
  a.set(0, 0, 1, 0);  // consistent: b at x=1 returns to x=0
  b.set(0, 1, -1, 0);
  a.set(0, 7, 3, 0);  // lands outside the frame
  a.set(0, 2, 2, 0);  // b at x=4 does not cancel it: |a + b|^2 = 4 > 0.01 * 8 + 0.5
  b.set(0, 4, 0, 0);
  const OcclusionMask m = occlusion_mask(a, b);
  o.require(m.traceable(0, 0), "consistent pixel marked untraceable");
  o.require(!m.traceable(0, 7), "out-of-bounds pixel marked traceable");
  o.require(!m.traceable(0, 2), "inconsistent pixel marked traceable");
  o.require(m.traceable(0, 3), "zero-flow pixel marked untraceable");
  if (o.pass) {
    o.detail = "50/50 bit-exact round-trips each for .flo, PPM, PGM; truth table "
               "(consistent, out-of-bounds, inequality, static) holds";
  }
  return o;
}

// --- 5: reduction ---------------------------------------------------------

FrameEvaluation evaluate_frame(const StyleNetModel& model, const FeatureExtractor& ex,
                               const Tensor& input) {
  FrameEvaluation e;
  e.input = input;
  const StyleNetOutput out = forward(model, input);
  e.output = out.image;
  e.features = out.features;
  e.output_taps = extract(ex, out.image);
  e.content_taps = extract(ex, input);
  return e;
}

Outcome criterion5() {
  Outcome o;
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const StyleNetModel model = build({0.25f, 0.5f, Variant::paper}, 10 + trial);
    const FeatureExtractor ex = tiny_extractor(20 + trial);
    const StyleTarget target =
        make_style_target(ex, random_tensor(Shape{1, 3, 24, 24}, 30 + trial, 0, 1));
    const FrameEvaluation prev =
        evaluate_frame(model, ex, random_tensor(Shape{1, 3, 16, 24}, 40 + trial, 0, 1));
    const FrameEvaluation cur =
        evaluate_frame(model, ex, random_tensor(Shape{1, 3, 16, 24}, 50 + trial, 0, 1));
    LossWeights w;
    w.content = 0.5 + trial;
    w.style = 1e3 * (trial + 1);
    w.tv = 1e-3;
    w.temporal_feature = 0;
    w.temporal_output = 0;
    const LossTerms two =
        total_stage2(prev, cur, random_flow(16, 24, 60 + trial, 3.0), random_mask(16, 24, 70 + trial),
                     target, w);
    const double sum =
        total_stage1(prev.output, prev.output_taps, prev.content_taps, target, w).total +
        total_stage1(cur.output, cur.output_taps, cur.content_taps, target, w).total;
    worst = std::max(worst, std::abs(two.total - sum) / std::max(1.0, std::abs(sum)));
  }
  o.require(worst < 1e-5, fmt("stage-2 total differs from the stage-1 sum by %.3g", worst));
  if (o.pass) o.detail = fmt("10 random pairs, worst relative difference %.2g", worst);
  return o;
}

// --- 6 / 7: desk-scale training ------------------------------------------

// Diagonal colour bands.
Tensor style_pattern(int size) {
  Tensor s(1, 3, size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double t = (x + 2 * y) * 0.35;
      s.at(0, 0, y, x) = float(0.5 + 0.5 * std::sin(t));
      s.at(0, 1, y, x) = float(0.5 + 0.5 * std::sin(t + 2.1));
      s.at(0, 2, y, x) = float(0.5 + 0.5 * std::sin(0.5 * t + 4.2));
    }
  return s;
}

std::vector<Tensor> still_frames(std::uint64_t seed, int count, int size) {
  std::vector<Tensor> out;
  for (int i = 0; i < count; ++i) out.push_back(synth_sequence(seed + i, 1, size, size, 0, 0).frames[0]);
  return out;
}

struct DeskSetup {
  FeatureExtractor extractor = tiny_extractor(7);
  StyleTarget target = make_style_target(extractor, style_pattern(64));
  TrainingConfig config;

  DeskSetup() {
    config.height = 64;
    config.width = 64;
    config.batch_size = 2;
    config.seed = 3;
    config.adam.learning_rate = 1e-2;
  }
};

Outcome criterion6() {
  Outcome o;
  DeskSetup s;
  s.config.steps = 300;
  const StyleNetModel init = build({0.125f, 1.0f, Variant::paper}, 1);
  const std::vector<Tensor> frames = still_frames(100, 8, 64);
  const TrainResult r = train_stage1(init, frames, s.extractor, s.target, s.config);
  bool finite = true;
  for (const TraceRow& row : r.trace) finite = finite && std::isfinite(row.terms.total);
  for (const NamedConstParam& p : r.model.parameters()) finite = finite && p.tensor->all_finite();
  const auto smooth = smoothed_totals(r.trace);
  const double initial = r.trace.front().terms.total;
  const double final_ = smooth.back();
  o.require(r.trace.size() == 300, fmt("%zu steps traced", r.trace.size()));
  o.require(finite, "non-finite loss or weights");
  o.require(final_ < 0.5 * initial,
            fmt("smoothed loss %.4g is %.1f%% of initial %.4g", final_, 100 * final_ / initial, initial));
  if (o.pass) {
    o.detail = fmt("300 steps, initial %.4g, final smoothed %.4g (%.1f%%), all finite", initial, final_,
                   100 * final_ / initial);
  }
  return o;
}

std::vector<PairSample> sequence_pairs(const SyntheticSequence& s) {
  std::vector<PairSample> out;
  for (std::size_t t = 0; t + 1 < s.frames.size(); ++t) {
    out.push_back({s.frames[t], s.frames[t + 1], s.backward_flows[t], s.masks[t]});
  }
  return out;
}

double clip_flicker(const StyleNetModel& model, const SyntheticSequence& clip) {
  std::vector<Tensor> stylized;
  for (const Tensor& f : clip.frames) stylized.push_back(stylize(model, f));
  return flicker_metric(stylized, clip.backward_flows, clip.masks);
}

Outcome criterion7() {
  Outcome o;
  DeskSetup s;
  s.config.steps = 800;
  const StyleNetModel stage1 =
      train_stage1(build({0.125f, 1.0f, Variant::paper}, 1), still_frames(100, 8, 64), s.extractor,
                   s.target, s.config)
          .model;

  std::vector<PairSample> pairs;
  const std::array<std::pair<int, int>, 8> velocities{
      {{2, 1}, {-1, 2}, {3, 0}, {0, -2}, {-2, -1}, {1, -3}, {-3, 0}, {2, 2}}};
  for (std::size_t k = 0; k < velocities.size(); ++k) {
    const auto seq = synth_sequence(200 + k, 6, 64, 64, velocities[k].first, velocities[k].second);
    for (PairSample& p : sequence_pairs(seq)) pairs.push_back(std::move(p));
  }
  TrainingConfig tune = s.config;
  tune.steps = 200;
  tune.seed = 4;
  tune.batch_size = 4;
  tune.adam.learning_rate = 1e-3;
  tune.weights.temporal_output = 1e3;
  tune.weights.temporal_feature = 1.0;
  const StyleNetModel tuned = finetune_stage2(stage1, pairs, s.extractor, s.target, tune).model;
  TrainingConfig control_config = tune;
  control_config.weights.temporal_output = 0;
  control_config.weights.temporal_feature = 0;
  const StyleNetModel control =
      finetune_stage2(stage1, pairs, s.extractor, s.target, control_config).model;

  const std::array<std::pair<int, int>, 3> held_velocities{{{2, -1}, {-3, 1}, {1, 3}}};
  double before = 0, after = 0, control_after = 0, loss_before = 0, loss_after = 0;
  for (std::size_t k = 0; k < held_velocities.size(); ++k) {
    const SyntheticSequence clip =
        synth_sequence(990 + k, 8, 64, 64, held_velocities[k].first, held_velocities[k].second);
    before += clip_flicker(stage1, clip);
    after += clip_flicker(tuned, clip);
    control_after += clip_flicker(control, clip);
    loss_before += evaluate_stage1(stage1, clip.frames, s.extractor, s.target, s.config.weights).total;
    loss_after += evaluate_stage1(tuned, clip.frames, s.extractor, s.target, s.config.weights).total;
  }
  const double reduction = 1.0 - after / before;
  o.require(reduction >= 0.2, fmt("flicker %.4g -> %.4g, only %.1f%% lower", before / 3, after / 3,
                                  100 * reduction));
  o.require(loss_after <= 2.0 * loss_before,
            fmt("stage-1 loss grew %.2fx (%.4g -> %.4g)", loss_after / loss_before, loss_before / 3,
                loss_after / 3));
  if (o.pass) {
    o.detail = fmt("held-out flicker %.4g -> %.4g (%.1f%% lower); stage-1 loss %.4g -> %.4g (%.2fx)",
                   before / 3, after / 3, 100 * reduction, loss_before / 3, loss_after / 3,
                   loss_after / loss_before);
  }
  o.extra.push_back(fmt("same fine-tuning without temporal terms: flicker %.4g -> %.4g (%+.1f%%)",
                        before / 3, control_after / 3, 100 * (control_after / before - 1.0)));
  return o;
}

// --- 8: throughput trend --------------------------------------------------

Outcome criterion8() {
  Outcome o;
  std::vector<Tensor> frames;
  for (int i = 0; i < 4; ++i) frames.push_back(random_tensor(Shape{1, 3, 540, 960}, 80 + i, 0, 1));
  const std::array<std::pair<int, int>, 2> resolutions{{{480, 320}, {320, 240}}};
  std::vector<double> log_params;
  std::array<std::vector<double>, 2> fps;
  int ordered = 0;
  std::string slower;
  for (const ArchConfig& c : size_study_configs()) {
    const StyleNetModel m = build(c, 1);
    log_params.push_back(std::log10(double(param_count(c))));
    for (std::size_t r = 0; r < resolutions.size(); ++r) {
      const BenchResult b = bench_model(m, frames, resolutions[r].first, resolutions[r].second, 50, 200);
      fps[r].push_back(b.fps());
    }
    if (fps[1].back() >= fps[0].back()) {
      ++ordered;
    } else {
      slower += " " + c.label();
    }
  }
  const double rho_large = spearman(log_params, fps[0]);
  const double rho_small = spearman(log_params, fps[1]);
  o.require(rho_large <= -0.9, fmt("spearman at 480x320 %.3f", rho_large));
  o.require(rho_small <= -0.9, fmt("spearman at 320x240 %.3f", rho_small));
  o.require(ordered == 15, fmt("320x240 slower than 480x320 for%s", slower.c_str()));
  std::string table;
  for (std::size_t i = 0; i < fps[0].size(); ++i) {
    table += fmt(" %.1f/%.1f", fps[0][i], fps[1][i]);
  }
  o.extra.push_back("fps 480x320/320x240 in table order:" + table);
  if (o.pass) {
    o.detail = fmt("200 frames per run; spearman %.3f (480x320), %.3f (320x240); 320x240 faster "
                   "for 15/15",
                   rho_large, rho_small);
  }
  return o;
}

// --- 9: determinism ---------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STYLEFORGE_CLI) + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

Outcome criterion9() {
  Outcome o;
  const fs::path dir = scratch_dir("acceptance_determinism");
  write_ppm_file(dir / "style.ppm", style_pattern(48));
  fs::create_directories(dir / "stills");
  for (int i = 0; i < 6; ++i) {
    write_ppm_file(dir / "stills" / fmt("img_%02d.ppm", i), still_frames(300 + i, 1, 32)[0]);
  }
  write_sequence(synth_sequence(400, 5, 32, 32, 1, 1), dir / "video" / "clip");
  std::ofstream(dir / "job.cfg") << "style_image = style.ppm\nstyle_size = 48\nalpha = 0.125\n"
                                    "beta = 0.5\nsteps = 12\nbatch_size = 2\nwidth = 32\n"
                                    "height = 32\nseed = 5\nlearning_rate = 0.01\n";
  for (int run = 0; run < 2; ++run) {
    const fs::path out = dir / ("run" + std::to_string(run));
    fs::create_directories(out);
    o.require(run_cli("train --config " + (dir / "job.cfg").string() + " --data " +
                      (dir / "stills").string() + " --out " + (out / "stage1.kstm").string()) == 0,
              "train failed");
    o.require(run_cli("finetune --config " + (dir / "job.cfg").string() + " --model " +
                      (out / "stage1.kstm").string() + " --data " + (dir / "video").string() +
                      " --out " + (out / "stage2.kstm").string()) == 0,
              "finetune failed");
    o.require(run_cli("stylize --workers 1 --model " + (out / "stage2.kstm").string() + " --in " +
                      (dir / "video" / "clip" / "frames").string() + " --out " +
                      (out / "frames").string()) == 0,
              "stylize failed");
  }
  if (!o.pass) return o;
  int compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "run0")) {
    if (!e.is_regular_file()) continue;
    const fs::path twin = dir / "run1" / fs::relative(e.path(), dir / "run0");
    if (!fs::exists(twin) || file_bytes(twin) != file_bytes(e.path())) {
      o.require(false, "differs: " + fs::relative(e.path(), dir).string());
    }
    ++compared;
  }
  o.require(compared >= 9, fmt("only %d files produced", compared));
  if (o.pass) {
    o.detail = fmt("%d files bit-identical across two runs (models, traces, stylized frames)", compared);
  }
  return o;
}

struct Criterion {
  int id;
  double limit_seconds;  ///< 0: no limit
  Outcome (*run)();
};

constexpr std::array<Criterion, 9> kCriteria = {{
    {1, 1, criterion1},
    {2, 10, criterion2},
    {3, 120, criterion3},
    {4, 5, criterion4},
    {5, 0, criterion5},
    {6, 600, criterion6},
    {7, 900, criterion7},
    {8, 1200, criterion8},
    {9, 0, criterion9},
}};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  bool all_pass = true;
  for (const Criterion& c : kCriteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_seconds > 0 && seconds > c.limit_seconds) {
      o.require(false, fmt("took %.1f s, limit %.0f s", seconds, c.limit_seconds));
    }
    std::cout << "criterion " << c.id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << fmt(" [%.2f s]", seconds) << "\n";
    for (const std::string& line : o.extra) std::cout << "  criterion " << c.id << " note: " << line << "\n";
    std::cout.flush();
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
