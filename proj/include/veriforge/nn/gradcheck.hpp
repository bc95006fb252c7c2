#pragma once

#include <functional>
#include <string>
#include <vector>

#include "veriforge/nn/autograd.hpp"

namespace veriforge::nn {

using LossFn = std::function<Var()>;

struct GradCheckOptions {
  /// Coordinates sampled per input; all of them when the input is smaller.
  std::size_t max_coords = 32;
  std::uint64_t seed = 0;
  /// Step is rel_step * max(1, |theta|).
  double rel_step = 1e-5;
  /// Denominator floor; keeps near-zero gradients from reporting huge relative errors.
  double floor = 1e-6;
  /// A ReLU or clamp kink inside [theta - h, theta + h] spoils the central difference
  /// while the analytic gradient is fine. Coordinates worse than `retry_above` are
  /// measured again with steps shrunk by retry_shrink, up to kink_retries times, and
  /// keep the smallest error. A wrong gradient disagrees at every step.
  int kink_retries = 3;
  double retry_above = 1e-6;
  double retry_shrink = 10.0;
  /// Tiny gradients of a large loss drown in cancellation at small steps, so one
  /// step of h * retry_grow is also tried. 1 disables it.
  double retry_grow = 10.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords = 0;
  std::string worst;  // "input[i]" of the worst coordinate
};

/// Gradients of loss() with respect to each input (leaves with requires_grad).
std::vector<Tensor> analytic_gradients(const LossFn& loss, const std::vector<Var>& inputs);

/// Compares `analytic` against central differences of loss().
GradCheckReport compare_with_finite_differences(const LossFn& loss, const std::vector<Var>& inputs,
                                                const std::vector<Tensor>& analytic,
                                                const GradCheckOptions& opt = {});

/// Max relative error |a - n| / max(|n|, floor) over the sampled coordinates.
GradCheckReport grad_check(const LossFn& loss, const std::vector<Var>& inputs, const GradCheckOptions& opt = {});

}  // namespace veriforge::nn
