#include "styleforge/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "styleforge/error.hpp"

namespace styleforge {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMatrix<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

// Upper bound on the im2col scratch buffer, in elements.
constexpr std::size_t kColumnBudget = std::size_t{1} << 18;
// Output channel count up to which conv2d uses the direct kernel.
constexpr int kDirectMaxChannels = 8;

int reflect_index(int i, int extent) noexcept {
  if (i < 0) return -i;
  if (i >= extent) return 2 * (extent - 1) - i;
  return i;
}

// For every kernel tap and output coordinate, the source coordinate along one
// axis (or -1 for a zero-padded position). Layout: [tap][out].
std::vector<int> source_table(int extent, int out_extent, int kernel, int stride,
                              Padding padding) {
  const int pad = (kernel - 1) / 2;
  std::vector<int> table(static_cast<std::size_t>(kernel) * out_extent);
  for (int k = 0; k < kernel; ++k) {
    for (int o = 0; o < out_extent; ++o) {
      const int i = o * stride + k - pad;
      int src;
      if (padding == Padding::reflect) {
        src = reflect_index(i, extent);
      } else {
        src = (i < 0 || i >= extent) ? -1 : i;
      }
      table[static_cast<std::size_t>(k) * out_extent + o] = src;
    }
  }
  return table;
}

struct ConvGeometry {
  int in_c, out_c, kernel, stride;
  Padding padding;
  int h, w, out_h, out_w;
  std::vector<int> rows;  // [ky][oy]
  std::vector<int> cols;  // [kx][ox]
  int chunk_rows;         // output rows per im2col block

  std::size_t depth() const { return static_cast<std::size_t>(in_c) * kernel * kernel; }
};

template <typename T>
ConvGeometry make_geometry(const BasicTensor<T>& x, const BasicTensor<T>& weight, int stride,
                           Padding padding) {
  const Shape& ws = weight.shape();
  if (ws.h != ws.w || ws.h % 2 == 0) {
    throw InvalidArgument("conv2d: kernel must be square and odd, got " + ws.str());
  }
  if (ws.c != x.c()) {
    throw InvalidArgument("conv2d: input has " + std::to_string(x.c()) +
                          " channels, weight expects " + std::to_string(ws.c));
  }
  if (stride != 1 && stride != 2) {
    throw InvalidArgument("conv2d: stride must be 1 or 2");
  }
  const int k = ws.h;
  if (padding == Padding::reflect && (x.h() < (k + 1) / 2 || x.w() < (k + 1) / 2)) {
    throw InvalidArgument("conv2d: spatial extent " + x.shape().str() +
                          " too small for reflection padding of a " + std::to_string(k) +
                          "x" + std::to_string(k) + " kernel");
  }
  ConvGeometry g;
  g.in_c = x.c();
  g.out_c = ws.n;
  g.kernel = k;
  g.stride = stride;
  g.padding = padding;
  g.h = x.h();
  g.w = x.w();
  g.out_h = conv_output_extent(g.h, stride);
  g.out_w = conv_output_extent(g.w, stride);
  g.rows = source_table(g.h, g.out_h, k, stride, padding);
  g.cols = source_table(g.w, g.out_w, k, stride, padding);
  const std::size_t per_row = g.depth() * g.out_w;
  g.chunk_rows = static_cast<int>(std::clamp<std::size_t>(kColumnBudget / per_row, 1, g.out_h));
  return g;
}

// Fill col (depth x rows*out_w) for output rows [oy0, oy0 + rows) of sample n.
template <typename T>
void im2col(const BasicTensor<T>& x, int n, const ConvGeometry& g, int oy0, int rows, T* col) {
  const std::size_t span = static_cast<std::size_t>(rows) * g.out_w;
  const int pad = (g.kernel - 1) / 2;
  for (int ci = 0; ci < g.in_c; ++ci) {
    const T* src = x.plane(n, ci);
    for (int ky = 0; ky < g.kernel; ++ky) {
      const int* row_src = g.rows.data() + static_cast<std::size_t>(ky) * g.out_h;
      for (int kx = 0; kx < g.kernel; ++kx) {
        const int* col_src = g.cols.data() + static_cast<std::size_t>(kx) * g.out_w;
        // output columns whose source lies inside the row
        const int lo = std::min(g.out_w, std::max(0, (pad - kx + g.stride - 1) / g.stride));
        const int hi = std::max(lo, std::min(g.out_w, (g.w - 1 + pad - kx) / g.stride + 1));
        T* dst = col + ((static_cast<std::size_t>(ci) * g.kernel + ky) * g.kernel + kx) * span;
        for (int r = 0; r < rows; ++r) {
          const int iy = row_src[oy0 + r];
          T* out = dst + static_cast<std::size_t>(r) * g.out_w;
          if (iy < 0) {
            std::fill(out, out + g.out_w, T(0));
            continue;
          }
          const T* line = src + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < lo; ++ox) out[ox] = col_src[ox] < 0 ? T(0) : line[col_src[ox]];
          const T* base = line + kx - pad;
          if (g.stride == 1) {
            std::copy(base + lo, base + hi, out + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) out[ox] = base[2 * ox];
          }
          for (int ox = hi; ox < g.out_w; ++ox) {
            out[ox] = col_src[ox] < 0 ? T(0) : line[col_src[ox]];
          }
        }
      }
    }
  }
}

// Direct convolution for layers with few output channels, where im2col would
// copy each input value kernel^2 times for very little reuse.
template <typename T>
void conv_direct(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                 const ConvGeometry& g, BasicTensor<T>& out) {
  const int k = g.kernel, s = g.stride, pad = (k - 1) / 2;
  const int padded_h = (g.out_h - 1) * s + k;
  const int padded_w = (g.out_w - 1) * s + k;
  // each padded row is split into s phases so every tap reads a contiguous run
  const int phase_w = (padded_w + s - 1) / s;
  const std::size_t row_len = static_cast<std::size_t>(s) * phase_w;
  const std::size_t ci_len = row_len * padded_h;
  AlignedVector<T> padded(ci_len * g.in_c);
  auto source = [&](int i, int extent) {
    if (i >= 0 && i < extent) return i;
    if (g.padding == Padding::zero) return -1;
    return reflect_index(i, extent);
  };
  std::vector<int> sx(padded_w);
  for (int px = 0; px < padded_w; ++px) sx[px] = source(px - pad, g.w);

  AlignedVector<T> acc(static_cast<std::size_t>(g.out_c) * g.out_w);
  for (int n = 0; n < x.n(); ++n) {
    for (int ci = 0; ci < g.in_c; ++ci) {
      const T* src = x.plane(n, ci);
      for (int py = 0; py < padded_h; ++py) {
        T* row = padded.data() + ci * ci_len + py * row_len;
        const int sy = source(py - pad, g.h);
        if (sy < 0) {
          std::fill(row, row + row_len, T(0));
          continue;
        }
        const T* line = src + static_cast<std::size_t>(sy) * g.w;
        for (int px = 0; px < padded_w; ++px) {
          row[(px % s) * phase_w + px / s] = sx[px] < 0 ? T(0) : line[sx[px]];
        }
      }
    }
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int co = 0; co < g.out_c; ++co) {
        std::fill_n(acc.data() + co * g.out_w, g.out_w, bias[co]);
      }
      for (int ci = 0; ci < g.in_c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
          const T* row = padded.data() + ci * ci_len + (oy * s + ky) * row_len;
          for (int kx = 0; kx < k; ++kx) {
            const T* in = row + (kx % s) * phase_w + kx / s;
            for (int co = 0; co < g.out_c; ++co) {
              const T wv = weight.at(co, ci, ky, kx);
              T* a = acc.data() + co * g.out_w;
              for (int ox = 0; ox < g.out_w; ++ox) a[ox] += wv * in[ox];
            }
          }
        }
      }
      for (int co = 0; co < g.out_c; ++co) {
        std::copy_n(acc.data() + co * g.out_w, g.out_w,
                    out.plane(n, co) + static_cast<std::size_t>(oy) * g.out_w);
      }
    }
  }
}

// Scatter-add of a column block back onto the input gradient.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, int oy0, int rows, BasicTensor<T>& gx, int n) {
  const std::size_t span = static_cast<std::size_t>(rows) * g.out_w;
  for (int ci = 0; ci < g.in_c; ++ci) {
    T* dst = gx.plane(n, ci);
    for (int ky = 0; ky < g.kernel; ++ky) {
      const int* row_src = g.rows.data() + static_cast<std::size_t>(ky) * g.out_h;
      for (int kx = 0; kx < g.kernel; ++kx) {
        const int* col_src = g.cols.data() + static_cast<std::size_t>(kx) * g.out_w;
        const T* src = col + ((static_cast<std::size_t>(ci) * g.kernel + ky) * g.kernel + kx) * span;
        for (int r = 0; r < rows; ++r) {
          const int iy = row_src[oy0 + r];
          if (iy < 0) continue;
          T* line = dst + static_cast<std::size_t>(iy) * g.w;
          const T* in = src + static_cast<std::size_t>(r) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = col_src[ox];
            if (ix >= 0) line[ix] += in[ox];
          }
        }
      }
    }
  }
}

// Sum of f(i) over [0, count) in double with eight interleaved partial sums;
// the summation order is fixed, so results stay bit-reproducible.
template <typename F>
double lane_sum(std::size_t count, F f) {
  double lanes[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= count; i += 8) {
    for (int j = 0; j < 8; ++j) lanes[j] += f(i + j);
  }
  for (; i < count; ++i) lanes[i % 8] += f(i);
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
         ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
}

template <typename T>
void expect_same_shape(const BasicTensor<T>& a, const Shape& s, const char* what) {
  if (a.shape() != s) {
    throw InvalidArgument(std::string(what) + ": expected shape " + s.str() + ", got " +
                          a.shape().str());
  }
}

}  // namespace

template <typename T>
BasicConvSpec<T> BasicConvSpec<T>::zeros(int in, int out, int kernel, int stride,
                                         Padding padding) {
  BasicConvSpec spec;
  spec.in_channels = in;
  spec.out_channels = out;
  spec.kernel = kernel;
  spec.stride = stride;
  spec.padding = padding;
  spec.weight = BasicTensor<T>(out, in, kernel, kernel);
  spec.bias = BasicTensor<T>(1, out, 1, 1);
  spec.validate();
  return spec;
}

template <typename T>
void BasicConvSpec<T>::validate() const {
  if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument("conv kernel must be odd");
  if (stride != 1 && stride != 2) throw InvalidArgument("conv stride must be 1 or 2");
  if (weight.shape() != Shape{out_channels, in_channels, kernel, kernel}) {
    throw InvalidArgument("conv weight shape " + weight.shape().str() +
                          " disagrees with in/out/kernel");
  }
  if (bias.size() != static_cast<std::size_t>(out_channels)) {
    throw InvalidArgument("conv bias must hold out_channels values");
  }
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicConvSpec<T>& spec) {
  if (x.c() != spec.in_channels) {
    throw InvalidArgument("conv2d: input has " + std::to_string(x.c()) +
                          " channels, spec expects " + std::to_string(spec.in_channels));
  }
  return conv2d(x, spec.weight, spec.bias, spec.stride, spec.padding);
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, int stride, Padding padding) {
  const ConvGeometry g = make_geometry(x, weight, stride, padding);
  if (bias.size() != static_cast<std::size_t>(g.out_c)) {
    throw InvalidArgument("conv2d: bias must hold out_channels values");
  }
  BasicTensor<T> out(x.n(), g.out_c, g.out_h, g.out_w);
  if (g.out_c <= kDirectMaxChannels) {
    conv_direct(x, weight, bias, g, out);
    return out;
  }
  const std::size_t depth = g.depth();
  AlignedVector<T> col(depth * static_cast<std::size_t>(g.chunk_rows) * g.out_w);
  ConstMatrixMap<T> w(weight.ptr(), g.out_c, static_cast<Eigen::Index>(depth));
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;

  for (int n = 0; n < x.n(); ++n) {
    for (int oy0 = 0; oy0 < g.out_h; oy0 += g.chunk_rows) {
      const int rows = std::min(g.chunk_rows, g.out_h - oy0);
      const Eigen::Index span = static_cast<Eigen::Index>(rows) * g.out_w;
      im2col(x, n, g, oy0, rows, col.data());
      ConstMatrixMap<T> c(col.data(), static_cast<Eigen::Index>(depth), span);
      StridedMap<T> o(out.plane(n, 0) + static_cast<std::size_t>(oy0) * g.out_w, g.out_c, span,
                      Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
      o.noalias() = w * c;
      for (int co = 0; co < g.out_c; ++co) o.row(co).array() += bias[co];
    }
  }
  return out;
}

template <typename T>
void conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight, int stride,
                     Padding padding, const BasicTensor<T>& grad_out, BasicTensor<T>* grad_x,
                     BasicTensor<T>* grad_weight, BasicTensor<T>* grad_bias) {
  const ConvGeometry g = make_geometry(x, weight, stride, padding);
  expect_same_shape(grad_out, Shape{x.n(), g.out_c, g.out_h, g.out_w}, "conv2d_backward");
  if (grad_x) expect_same_shape(*grad_x, x.shape(), "conv2d_backward grad_x");
  if (grad_weight) expect_same_shape(*grad_weight, weight.shape(), "conv2d_backward grad_weight");
  if (grad_bias && grad_bias->size() != static_cast<std::size_t>(g.out_c)) {
    throw InvalidArgument("conv2d_backward: grad_bias must hold out_channels values");
  }
  const std::size_t depth = g.depth();
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  AlignedVector<T> col(depth * static_cast<std::size_t>(g.chunk_rows) * g.out_w);
  AlignedVector<T> dcol(grad_x ? col.size() : 0);
  ConstMatrixMap<T> w(weight.ptr(), g.out_c, static_cast<Eigen::Index>(depth));

  for (int n = 0; n < x.n(); ++n) {
    for (int oy0 = 0; oy0 < g.out_h; oy0 += g.chunk_rows) {
      const int rows = std::min(g.chunk_rows, g.out_h - oy0);
      const Eigen::Index span = static_cast<Eigen::Index>(rows) * g.out_w;
      ConstStridedMap<T> go(grad_out.plane(n, 0) + static_cast<std::size_t>(oy0) * g.out_w,
                            g.out_c, span,
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
      if (grad_bias) {
        for (int co = 0; co < g.out_c; ++co) (*grad_bias)[co] += go.row(co).sum();
      }
      if (grad_weight) {
        im2col(x, n, g, oy0, rows, col.data());
        ConstMatrixMap<T> c(col.data(), static_cast<Eigen::Index>(depth), span);
        MatrixMap<T> gw(grad_weight->ptr(), g.out_c, static_cast<Eigen::Index>(depth));
        gw.noalias() += go * c.transpose();
      }
      if (grad_x) {
        MatrixMap<T> dc(dcol.data(), static_cast<Eigen::Index>(depth), span);
        dc.noalias() = w.transpose() * go;
        col2im(dcol.data(), g, oy0, rows, *grad_x, n);
      }
    }
  }
}

template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& x, std::span<const T> gamma,
                             std::span<const T> beta, T eps, InstanceNormCache<T>* cache) {
  const auto channels = static_cast<std::size_t>(x.c());
  if (gamma.size() != channels || beta.size() != channels) {
    throw InvalidArgument("instance_norm: gamma/beta length must equal channel count " +
                          std::to_string(channels));
  }
  BasicTensor<T> out(x.shape());
  if (cache) {
    cache->normalized = BasicTensor<T>(x.shape());
    cache->inv_std.assign(static_cast<std::size_t>(x.n()) * channels, T(0));
  }
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      const double mean =
          lane_sum(plane, [&](std::size_t i) { return double(src[i]); }) / double(plane);
      const double var = lane_sum(plane, [&](std::size_t i) {
                           const double d = src[i] - mean;
                           return d * d;
                         }) /
                         double(plane);
      const T inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const T m = static_cast<T>(mean);
      T* dst = out.plane(n, c);
      T* norm = cache ? cache->normalized.plane(n, c) : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xhat = (src[i] - m) * inv_std;
        if (norm) norm[i] = xhat;
        dst[i] = gamma[c] * xhat + beta[c];
      }
      if (cache) cache->inv_std[static_cast<std::size_t>(n) * channels + c] = inv_std;
    }
  }
  return out;
}

template <typename T>
void instance_norm_backward(const InstanceNormCache<T>& cache, std::span<const T> gamma,
                            const BasicTensor<T>& grad_out, BasicTensor<T>* grad_x,
                            BasicTensor<T>* grad_gamma, BasicTensor<T>* grad_beta) {
  const BasicTensor<T>& xhat = cache.normalized;
  expect_same_shape(grad_out, xhat.shape(), "instance_norm_backward");
  const std::size_t plane = xhat.shape().plane();
  const T count = static_cast<T>(plane);
  for (int n = 0; n < xhat.n(); ++n) {
    for (int c = 0; c < xhat.c(); ++c) {
      const T* g = grad_out.plane(n, c);
      const T* xh = xhat.plane(n, c);
      const T sum_g = static_cast<T>(lane_sum(plane, [&](std::size_t i) { return double(g[i]); }));
      const T sum_gx = static_cast<T>(
          lane_sum(plane, [&](std::size_t i) { return double(g[i]) * double(xh[i]); }));
      if (grad_gamma) (*grad_gamma)[c] += sum_gx;
      if (grad_beta) (*grad_beta)[c] += sum_g;
      if (grad_x) {
        const T inv_std = cache.inv_std[static_cast<std::size_t>(n) * xhat.c() + c];
        const T scale = gamma[c] * inv_std / count;
        T* gx = grad_x->plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          gx[i] += scale * (count * g[i] - sum_g - xh[i] * sum_gx);
        }
      }
    }
  }
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

template <typename T>
void relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out,
                   BasicTensor<T>& grad_x) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > T(0)) grad_x[i] += grad_out[i];
  }
}

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, int factor) {
  if (factor < 1) throw InvalidArgument("upsample_nearest: factor must be >= 1");
  BasicTensor<T> out(x.n(), x.c(), x.h() * factor, x.w() * factor);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (int i = 0; i < out.h(); ++i) {
        const T* line = src + static_cast<std::size_t>(i / factor) * x.w();
        T* o = dst + static_cast<std::size_t>(i) * out.w();
        for (int j = 0; j < out.w(); ++j) o[j] = line[j / factor];
      }
    }
  }
  return out;
}

template <typename T>
void upsample_nearest_backward(const BasicTensor<T>& grad_out, int factor,
                               BasicTensor<T>& grad_x) {
  for (int n = 0; n < grad_x.n(); ++n) {
    for (int c = 0; c < grad_x.c(); ++c) {
      const T* src = grad_out.plane(n, c);
      T* dst = grad_x.plane(n, c);
      for (int i = 0; i < grad_out.h(); ++i) {
        const T* line = src + static_cast<std::size_t>(i) * grad_out.w();
        T* o = dst + static_cast<std::size_t>(i / factor) * grad_x.w();
        for (int j = 0; j < grad_out.w(); ++j) o[j / factor] += line[j];
      }
    }
  }
}

template <typename T>
BasicTensor<T> downsample_nearest(const BasicTensor<T>& x, int factor) {
  if (factor < 1 || x.h() % factor != 0 || x.w() % factor != 0) {
    throw InvalidArgument("downsample_nearest: extents must be divisible by the factor");
  }
  BasicTensor<T> out(x.n(), x.c(), x.h() / factor, x.w() / factor);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < out.h(); ++i)
        for (int j = 0; j < out.w(); ++j) out.at(n, c, i, j) = x.at(n, c, i * factor, j * factor);
  return out;
}

template <typename T>
BasicTensor<T> max_pool2(const BasicTensor<T>& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) {
    throw InvalidArgument("max_pool2: extents must be even, got " + x.shape().str());
  }
  BasicTensor<T> out(x.n(), x.c(), x.h() / 2, x.w() / 2);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < out.h(); ++i)
        for (int j = 0; j < out.w(); ++j) {
          const int y = 2 * i;
          const int xx = 2 * j;
          out.at(n, c, i, j) = std::max({x.at(n, c, y, xx), x.at(n, c, y, xx + 1),
                                         x.at(n, c, y + 1, xx), x.at(n, c, y + 1, xx + 1)});
        }
  return out;
}

template <typename T>
void max_pool2_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out,
                        BasicTensor<T>& grad_x) {
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < grad_out.h(); ++i)
        for (int j = 0; j < grad_out.w(); ++j) {
          // First maximum in raster order receives the gradient.
          int by = 2 * i;
          int bx = 2 * j;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              if (x.at(n, c, 2 * i + dy, 2 * j + dx) > x.at(n, c, by, bx)) {
                by = 2 * i + dy;
                bx = 2 * j + dx;
              }
          grad_x.at(n, c, by, bx) += grad_out.at(n, c, i, j);
        }
}

template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw InvalidArgument("resize_bilinear: empty target size");
  if (out_h == x.h() && out_w == x.w()) return x;
  BasicTensor<T> out(x.n(), x.c(), out_h, out_w);
  const double sy = static_cast<double>(x.h()) / out_h;
  const double sx = static_cast<double>(x.w()) / out_w;
  struct Tap {
    int i0, i1;
    T frac;
  };
  auto taps = [](int out_extent, int in_extent, double scale) {
    std::vector<Tap> t(static_cast<std::size_t>(out_extent));
    for (int o = 0; o < out_extent; ++o) {
      const double pos = std::clamp((o + 0.5) * scale - 0.5, 0.0, double(in_extent - 1));
      const int i0 = static_cast<int>(pos);
      const int i1 = std::min(i0 + 1, in_extent - 1);
      t[static_cast<std::size_t>(o)] = {i0, i1, static_cast<T>(pos - i0)};
    }
    return t;
  };
  const auto ty = taps(out_h, x.h(), sy);
  const auto tx = taps(out_w, x.w(), sx);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (int i = 0; i < out_h; ++i) {
        const Tap& a = ty[static_cast<std::size_t>(i)];
        const T* r0 = src + static_cast<std::size_t>(a.i0) * x.w();
        const T* r1 = src + static_cast<std::size_t>(a.i1) * x.w();
        T* o = dst + static_cast<std::size_t>(i) * out_w;
        for (int j = 0; j < out_w; ++j) {
          const Tap& b = tx[static_cast<std::size_t>(j)];
          const T top = r0[b.i0] + b.frac * (r0[b.i1] - r0[b.i0]);
          const T bottom = r1[b.i0] + b.frac * (r1[b.i1] - r1[b.i0]);
          o[j] = top + a.frac * (bottom - top);
        }
      }
    }
  return out;
}

template <typename T>
BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi) {
  BasicTensor<T> out = x;
  for (T& v : out.data()) v = std::clamp(v, lo, hi);
  return out;
}

#define STYLEFORGE_INSTANTIATE_OPS(T)                                                          \
  template struct BasicConvSpec<T>;                                                            \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicConvSpec<T>&);              \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                 const BasicTensor<T>&, int, Padding);                         \
  template void conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, int, Padding,    \
                                const BasicTensor<T>&, BasicTensor<T>*, BasicTensor<T>*,       \
                                BasicTensor<T>*);                                              \
  template BasicTensor<T> instance_norm(const BasicTensor<T>&, std::span<const T>,             \
                                        std::span<const T>, T, InstanceNormCache<T>*);         \
  template void instance_norm_backward(const InstanceNormCache<T>&, std::span<const T>,        \
                                       const BasicTensor<T>&, BasicTensor<T>*,                 \
                                       BasicTensor<T>*, BasicTensor<T>*);                      \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                         \
  template void relu_backward(const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>&);  \
  template BasicTensor<T> upsample_nearest(const BasicTensor<T>&, int);                        \
  template void upsample_nearest_backward(const BasicTensor<T>&, int, BasicTensor<T>&);        \
  template BasicTensor<T> downsample_nearest(const BasicTensor<T>&, int);                      \
  template BasicTensor<T> max_pool2(const BasicTensor<T>&);                                    \
  template void max_pool2_backward(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                   BasicTensor<T>&);                                           \
  template BasicTensor<T> resize_bilinear(const BasicTensor<T>&, int, int);                    \
  template BasicTensor<T> clamp(const BasicTensor<T>&, T, T);

STYLEFORGE_INSTANTIATE_OPS(float)
STYLEFORGE_INSTANTIATE_OPS(double)

#undef STYLEFORGE_INSTANTIATE_OPS

}  // namespace styleforge
