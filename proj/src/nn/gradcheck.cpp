#include "veriforge/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "veriforge/error.hpp"
#include "veriforge/rng.hpp"

namespace veriforge::nn {

std::vector<Tensor> analytic_gradients(const LossFn& loss, const std::vector<Var>& inputs) {
  for (Var v : inputs) {
    if (!v.requires_grad()) throw UsageError("grad_check input does not require grad");
    v.zero_grad();
  }
  loss().backward();
  std::vector<Tensor> out;
  for (const auto& v : inputs) out.push_back(v.grad());
  return out;
}

GradCheckReport compare_with_finite_differences(const LossFn& loss, const std::vector<Var>& inputs,
                                                const std::vector<Tensor>& analytic, const GradCheckOptions& opt) {
  if (analytic.size() != inputs.size()) throw UsageError("grad_check: gradient count mismatch");
  GradCheckReport rep;
  Rng rng = derive_rng(opt.seed, {0x67636b});
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Var v = inputs[k];
    const std::size_t n = v.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (n > opt.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      double& theta = v.mutable_value()[i];
      const double orig = theta;
      const double a = analytic[k][i];
      auto error_at = [&](double h) {
        theta = orig + h;
        const double fp = loss().item();
        theta = orig - h;
        const double fm = loss().item();
        theta = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        return std::abs(a - numeric) / std::max(std::abs(numeric), opt.floor);
      };
      const double h = opt.rel_step * std::max(1.0, std::abs(orig));
      double err = error_at(h);
      double step = h;
      for (int r = 0; r < opt.kink_retries && err > opt.retry_above; ++r) {
        step /= opt.retry_shrink;
        err = std::min(err, error_at(step));
      }
      if (err > opt.retry_above && opt.retry_grow > 1.0) err = std::min(err, error_at(h * opt.retry_grow));
      ++rep.coords;
      if (!(err <= rep.max_rel_error)) {
        rep.max_rel_error = err;
        rep.worst = "input" + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

GradCheckReport grad_check(const LossFn& loss, const std::vector<Var>& inputs, const GradCheckOptions& opt) {
  return compare_with_finite_differences(loss, inputs, analytic_gradients(loss, inputs), opt);
}

}  // namespace veriforge::nn
