#pragma once

#include <optional>
#include <vector>

#include "elastic/rng.hpp"
#include "elastic/tensor.hpp"

namespace elastic {

// ---- parameter bundles -----------------------------------------------------

struct ConvParams {
  TensorRef weight;               // (Cout, Cin/groups, k, k)
  TensorRef bias;                 // (1, Cout, 1, 1) or null
  int stride{1};
  int padding{0};
  int groups{1};

  i64 out_channels() const { return weight->shape.n; }
  i64 in_channels() const { return weight->shape.c * groups; }
  i64 kernel() const { return weight->shape.h; }

  // He fan-in normal init for the weight, zero bias.
  static ConvParams create(i64 cin, i64 cout, int k, int stride, int padding,
                           int groups, bool with_bias, Pcg32& rng);
};

struct NormParams {
  TensorRef gamma;                // (1, C, 1, 1)
  TensorRef beta;                 // (1, C, 1, 1)
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon{1e-5f};
  float momentum{0.1f};

  enum class Mode { train, eval };
  Mode mode{Mode::train};

  i64 channels() const { return gamma->shape.c; }
  static NormParams create(i64 channels);
};

struct LinearParams {
  TensorRef weight;               // (K, F, 1, 1)
  TensorRef bias;                 // (1, K, 1, 1)

  static LinearParams create(i64 in_features, i64 out_features, Pcg32& rng);
};

// ---- ops -------------------------------------------------------------------

// 2D convolution over NCHW, square kernels, symmetric zero padding, grouped.
// Backed by GEMM over an im2col expansion (1x1 stride-1 convs skip the
// expansion). Summation order is fixed, so results are bitwise reproducible
// for identical inputs.
TensorRef conv2d(const TensorRef& x, const ConvParams& p);

// Transposed convolution (groups=1), the adjoint of conv2d with the same
// stride. Used only by the trained-filter resampling variant.
TensorRef conv2d_transpose(const TensorRef& x, const ConvParams& p);

// Batch normalization over (N,H,W) per channel. Train mode normalizes with
// biased batch statistics and updates running stats (unbiased variance, as is
// conventional); eval mode uses the running stats. See NormParams::mode.
TensorRef batch_norm(const TensorRef& x, NormParams& p);

TensorRef relu(const TensorRef& x);

// Elementwise sum of two same-shaped tensors.
TensorRef add(const TensorRef& a, const TensorRef& b);

// Channel concatenation of same-(N,H,W) tensors.
TensorRef concat_channels(const TensorRef& a, const TensorRef& b);

// 2x2 stride-2 mean pooling. Output dims are ceil(H/2) x ceil(W/2): window i
// covers rows [2i, min(2i+2, H)), so for odd extents the last window is
// truncated to a single row/column and its mean renormalized. Even-extent
// windows are computed as 0.25f*((a+b)+(c+d)), which makes the op bitwise
// equal to bilinear_resize at exactly half size (see docs/numerics.md).
// H or W below 2 is a degenerate input.
TensorRef avg_pool2(const TensorRef& x);

// Max pooling with square kernel; ties resolve to the first element in scan
// order, and the backward routes gradient only to that element.
TensorRef max_pool2d(const TensorRef& x, int kernel, int stride, int padding);

// Bilinear interpolation to (out_h, out_w) under the half-pixel convention:
// src = (dst + 0.5) * (in/out) - 0.5, coordinates clamped to the valid range.
// Identity when the size is unchanged.
TensorRef bilinear_resize(const TensorRef& x, i64 out_h, i64 out_w);

// Nearest-neighbor resize under the same half-pixel source mapping.
TensorRef nearest_resize(const TensorRef& x, i64 out_h, i64 out_w);

// Mean over H and W -> (N, C, 1, 1). Works for any spatial size, which is
// what lets one trained classifier consume multiple eval resolutions.
TensorRef global_avg_pool(const TensorRef& x);

// Fully connected layer over flattened (C*H*W) features -> (N, K, 1, 1).
TensorRef linear(const TensorRef& x, const LinearParams& p);

// Mean cross entropy of softmax(logits) against integer labels -> scalar.
// Uses the max-subtraction trick; labels out of [0, K) are an input error.
TensorRef softmax_cross_entropy(const TensorRef& logits,
                                const std::vector<int>& labels);

// Scalar sum of all elements.
TensorRef sum(const TensorRef& x);

// Scalar dot product with a fixed (constant, non-differentiated) weight
// vector; the projection used to reduce an op output to one number for
// finite-difference checks.
TensorRef weighted_sum(const TensorRef& x, const std::vector<double>& w);

// Argmax class per row of (N, K, 1, 1) logits; ties resolve to the lowest
// class index.
std::vector<int> predict_classes(const TensorRef& logits);

}  // namespace elastic
