#pragma once

// Forward and backward kernels for the operator set of the transformation and
// feature networks. Everything here is a pure function of its arguments; the
// backward kernels accumulate (+=) into caller-provided gradient tensors so the
// tape can sum contributions from several consumers.

#include <span>
#include <vector>

#include "styleforge/tensor.hpp"

namespace styleforge {

enum class Padding {
  reflect,  ///< mirror without repeating the border: index -1 maps to 1
  zero,
};

template <typename T>
struct BasicConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;  ///< odd
  int stride = 1;  ///< 1 or 2
  Padding padding = Padding::reflect;
  BasicTensor<T> weight;  ///< (out, in, kernel, kernel)
  BasicTensor<T> bias;    ///< (1, out, 1, 1)

  /// Zero weights and bias with the extents implied by the arguments.
  static BasicConvSpec zeros(int in, int out, int kernel, int stride,
                             Padding padding = Padding::reflect);
  /// Throws InvalidArgument when the fields disagree with each other.
  void validate() const;
  std::size_t parameter_count() const noexcept { return weight.size() + bias.size(); }

  bool operator==(const BasicConvSpec&) const = default;
};

using ConvSpec = BasicConvSpec<float>;

/// Output extent of a conv along one axis: ceil(extent / stride).
constexpr int conv_output_extent(int extent, int stride) noexcept {
  return (extent + stride - 1) / stride;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicConvSpec<T>& spec);

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, int stride, Padding padding);

/// Any of the gradient pointers may be null when that gradient is not needed.
template <typename T>
void conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight, int stride,
                     Padding padding, const BasicTensor<T>& grad_out, BasicTensor<T>* grad_x,
                     BasicTensor<T>* grad_weight, BasicTensor<T>* grad_bias);

inline constexpr double kInstanceNormEps = 1e-5;

template <typename T>
struct InstanceNormCache {
  BasicTensor<T> normalized;  ///< (x - mean) / sqrt(var + eps)
  std::vector<T> inv_std;     ///< one per (sample, channel)
};

/// y = gamma * (x - mean) / sqrt(var + eps) + beta per (sample, channel), with
/// the population variance over the h*w plane.
template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& x, std::span<const T> gamma,
                             std::span<const T> beta, T eps = T(kInstanceNormEps),
                             InstanceNormCache<T>* cache = nullptr);

template <typename T>
void instance_norm_backward(const InstanceNormCache<T>& cache, std::span<const T> gamma,
                            const BasicTensor<T>& grad_out, BasicTensor<T>* grad_x,
                            BasicTensor<T>* grad_gamma, BasicTensor<T>* grad_beta);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

template <typename T>
void relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out,
                   BasicTensor<T>& grad_x);

/// out(i, j) = in(i / factor, j / factor).
template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, int factor = 2);

template <typename T>
void upsample_nearest_backward(const BasicTensor<T>& grad_out, int factor,
                               BasicTensor<T>& grad_x);

/// Picks the top-left sample of each factor x factor block; the inverse of
/// upsample_nearest on block-constant inputs.
template <typename T>
BasicTensor<T> downsample_nearest(const BasicTensor<T>& x, int factor = 2);

/// 2x2 max pooling with stride 2; h and w must be even.
template <typename T>
BasicTensor<T> max_pool2(const BasicTensor<T>& x);

template <typename T>
void max_pool2_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out,
                        BasicTensor<T>& grad_x);

/// Bilinear resize with half-pixel centers and edge clamping.
template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, int out_h, int out_w);

/// Clamp every value to [lo, hi].
template <typename T>
BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi);

}  // namespace styleforge
