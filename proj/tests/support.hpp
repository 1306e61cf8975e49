#pragma once

// Brute-force reference implementations and helpers shared by the test
// binaries. Nothing here calls into the library's kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "styleforge/flow.hpp"
#include "styleforge/ops.hpp"
#include "styleforge/stylenet.hpp"
#include "styleforge/tensor.hpp"

namespace sf_test {

using styleforge::BasicTensor;
using styleforge::FlowField;
using styleforge::Padding;
using styleforge::Shape;
using styleforge::Tensor;
using styleforge::TensorD;

template <typename T = float>
BasicTensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  BasicTensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

inline FlowField random_flow(int h, int w, std::uint64_t seed, double magnitude) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-magnitude, magnitude);
  FlowField f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f.set(y, x, float(dist(rng)), float(dist(rng)));
  return f;
}

// Source index of a padded position; -1 for zero padding outside the image.
inline int padded_index(int i, int extent, Padding p) {
  if (i >= 0 && i < extent) return i;
  if (p == Padding::zero) return -1;
  return i < 0 ? -i : 2 * (extent - 1) - i;
}

// Direct seven-loop cross-correlation.
inline TensorD conv_oracle(const TensorD& x, const TensorD& w, const TensorD& b, int stride,
                           Padding padding) {
  const int k = w.h(), pad = (k - 1) / 2;
  const int oh = (x.h() + stride - 1) / stride, ow = (x.w() + stride - 1) / stride;
  TensorD out(x.n(), w.n(), oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int co = 0; co < w.n(); ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b[co];
          for (int ci = 0; ci < x.c(); ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = padded_index(oy * stride + ky - pad, x.h(), padding);
                const int ix = padded_index(ox * stride + kx - pad, x.w(), padding);
                if (iy < 0 || ix < 0) continue;
                acc += w.at(co, ci, ky, kx) * x.at(n, ci, iy, ix);
              }
          out.at(n, co, oy, ox) = acc;
        }
  return out;
}

// Bilinear sample of one plane at (y, x) with both coordinates clamped.
inline double sample_oracle(const TensorD& t, int n, int c, double y, double x) {
  y = std::clamp(y, 0.0, double(t.h() - 1));
  x = std::clamp(x, 0.0, double(t.w() - 1));
  const int y0 = int(std::floor(y)), x0 = int(std::floor(x));
  const int y1 = std::min(y0 + 1, t.h() - 1), x1 = std::min(x0 + 1, t.w() - 1);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * t.at(n, c, y0, x0) + fx * t.at(n, c, y0, x1)) +
         fy * ((1 - fx) * t.at(n, c, y1, x0) + fx * t.at(n, c, y1, x1));
}

inline TensorD warp_oracle(const TensorD& t, const FlowField& f) {
  TensorD out(t.shape());
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x)
          out.at(n, c, y, x) = sample_oracle(t, n, c, y + double(f.v(y, x)), x + double(f.u(y, x)));
  return out;
}

inline std::vector<std::vector<double>> gram_oracle(const TensorD& f) {
  const int c = f.c();
  std::vector<std::vector<double>> g(c, std::vector<double>(c, 0.0));
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) {
      double s = 0;
      for (int y = 0; y < f.h(); ++y)
        for (int x = 0; x < f.w(); ++x) s += f.at(0, i, y, x) * f.at(0, j, y, x);
      g[i][j] = s / (double(c) * f.h() * f.w());
    }
  return g;
}

inline double tv_oracle(const TensorD& t) {
  double s = 0;
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x) {
          if (y + 1 < t.h()) s += std::pow(t.at(n, c, y + 1, x) - t.at(n, c, y, x), 2);
          if (x + 1 < t.w()) s += std::pow(t.at(n, c, y, x + 1) - t.at(n, c, y, x), 2);
        }
  return s / double(t.size());
}

// Layer-by-layer scalar count written from the architecture table: every conv
// contributes k*k*in*out + out, every instance norm 2*channels.
inline std::size_t count_oracle(int w1, int w2, int w3, int blocks, int end_kernel) {
  struct Layer {
    int in, out, k;
    bool norm;
  };
  std::vector<Layer> layers = {{3, w1, end_kernel, true}, {w1, w2, 3, true}, {w2, w3, 3, true}};
  for (int r = 0; r < blocks; ++r) {
    layers.push_back({w3, w3, 3, true});
    layers.push_back({w3, w3, 3, true});
  }
  layers.push_back({w3, w2, 3, true});
  layers.push_back({w2, w1, 3, true});
  layers.push_back({w1, 3, end_kernel, false});
  std::size_t total = 0;
  for (const auto& l : layers) {
    total += std::size_t(l.k) * l.k * l.in * l.out + l.out;
    if (l.norm) total += 2 * std::size_t(l.out);
  }
  return total;
}

inline std::size_t count_oracle(const styleforge::ArchConfig& c) {
  auto r = [](double v) { return int(std::floor(v + 0.5)); };
  const bool legacy = c.variant == styleforge::Variant::legacy_v1;
  const int blocks = legacy && c.beta == 1.0f ? 5 : r(4.0 * c.beta);
  return count_oracle(r(c.alpha * 32.0), r(c.alpha * 48.0), r(c.alpha * 64.0), blocks,
                      legacy ? 9 : 3);
}

// Central-difference gradient of f at x, element by element.
inline TensorD numeric_gradient(const std::function<double(const TensorD&)>& f, TensorD x,
                                double step = 1e-3) {
  TensorD g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2 * step);
  }
  return g;
}

// max |a - b| / max(max |b|, tiny): gradient-check error measure.
inline double relative_error(const TensorD& analytic, const TensorD& numeric) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::abs(numeric[i]));
  }
  return diff / std::max(scale, 1e-12);
}

inline double max_abs_diff(const TensorD& a, const TensorD& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  return max_abs_diff(a.cast<double>(), b.cast<double>());
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("styleforge_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sf_test
