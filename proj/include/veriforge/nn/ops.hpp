#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "veriforge/nn/autograd.hpp"

namespace veriforge::nn {

// Elementwise binary ops broadcast numpy-style (trailing axes aligned, extent 1 stretches).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

Var relu(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var cos(const Var& a);
/// Input must lie in [-1, 1]; clamp first when it may not.
Var acos(const Var& a);
/// Gradient passes only where lo < a < hi.
Var clamp(const Var& a, double lo, double hi);

Var sum(const Var& a, int axis, bool keepdim = false);
Var mean(const Var& a, int axis, bool keepdim = false);
Var sum_all(const Var& a);
Var mean_all(const Var& a);

/// Over the last axis.
Var softmax(const Var& a);
Var log_softmax(const Var& a);

Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, const std::vector<int>& perm);
Var concat(const std::vector<Var>& parts, int axis);
/// Elements [start, start + length) along `axis`.
Var slice(const Var& a, int axis, std::int64_t start, std::int64_t length);

/// out[n] = a[n, index[n]] for a of shape [N, C].
Var pick(const Var& a, std::span<const int> index);

/// [M, K] x [K, N].
Var matmul(const Var& a, const Var& b);
/// x[..., in] * weight[out, in]^T + bias[out]. Pass an undefined Var to skip the bias.
Var linear(const Var& x, const Var& weight, const Var& bias);

/// x[B, C, H, W], weight[O, C, kh, kw], zero padding.
Var conv2d(const Var& x, const Var& weight, int stride_h, int stride_w, int pad_h, int pad_w);
/// x[B, C, T], weight[O, C, k], stride 1, zero padding.
Var conv1d(const Var& x, const Var& weight, int dilation, int pad);

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
};

/// Normalizes over every axis except axis 1. Training mode uses batch statistics
/// and updates `stats`; eval mode applies the running statistics.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, bool training,
               double momentum, double eps);

/// a / sqrt(sum(a^2, last axis) + eps).
Var l2_normalize(const Var& a, double eps = 1e-8);

/// Worker threads used by the convolution kernels. Results do not depend on it.
void set_num_threads(int n);
int num_threads();

}  // namespace veriforge::nn
