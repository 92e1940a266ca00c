#pragma once

#include "siamdff/tensor.hpp"

namespace siamdff {

// Forward primitives. Convolutions are cross-correlations with zero padding
// (no kernel flip), the deep-learning convention.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& x);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

/// Normalizes along the last axis: zero mean, unit variance up to eps, then
/// scale/shift. scale and shift have the last-axis extent.
Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, real_t eps);

/// x: [C_in,H,W], kernel: [C_out,C_in,k,k], zero padding on both sides.
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t padding);

/// v: [C], kernel: [k] with k odd; zero-padded, shape preserving.
Tensor conv1d_channels(const Tensor& v, const Tensor& kernel);

enum class PoolMode { kMax, kAvg };

/// Reduces [C,H,W] across the channel axis to [1,H,W].
Tensor pool_over_channels(const Tensor& x, PoolMode mode);

/// Keeps every stride-th pixel, top-left aligned. Combined with conv2d this
/// is a strided convolution.
Tensor subsample2(const Tensor& x);

// Vector-Jacobian products. Each takes whatever forward values make the
// backward cheapest (inputs or outputs) plus the upstream gradient, and
// fills/returns gradients of the same shapes as the differentiated inputs.
// There is no tape; composite modules chain these by hand.

void matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& gout, Tensor& ga, Tensor& gb);
Tensor softmax_rows_vjp(const Tensor& y, const Tensor& gout);  // y = softmax_rows(x)
Tensor sigmoid_vjp(const Tensor& y, const Tensor& gout);       // y = sigmoid(x)
Tensor relu_vjp(const Tensor& x, const Tensor& gout);
void layer_norm_vjp(const Tensor& x, const Tensor& scale, real_t eps, const Tensor& gout,
                    Tensor& gx, Tensor& gscale, Tensor& gshift);
void conv2d_vjp(const Tensor& x, const Tensor& kernel, std::size_t padding, const Tensor& gout,
                Tensor& gx, Tensor& gkernel);
void conv1d_channels_vjp(const Tensor& v, const Tensor& kernel, const Tensor& gout, Tensor& gv,
                         Tensor& gkernel);
Tensor pool_over_channels_vjp(const Tensor& x, PoolMode mode, const Tensor& gout);
Tensor subsample2_vjp(const Tensor& x, const Tensor& gout);

}  // namespace siamdff
