#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "veriforge/nn/autograd.hpp"
#include "veriforge/nn/model.hpp"

namespace veriforge::train {

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<nn::Tensor> m;  // first moments, one per parameter
  std::vector<nn::Tensor> v;  // second moments

  static OptimizerState for_parameters(std::span<nn::Parameter* const> params);
};

/// g <- grad + weight_decay * theta, then a bias-corrected Adam update. Gradients
/// are zeroed afterwards. A non-finite gradient throws NumericError naming the
/// parameter before anything is modified.
void adam_step(std::span<nn::Parameter* const> params, OptimizerState& state, double lr, double weight_decay);

struct SchedulePolicy {
  double initial_lr = 0.001;
  double decay_fraction = 0.05;
  int decay_every = 5;
  int total_epochs = 20;

  /// 5% every 5 epochs (Q), 25% every 16 (H), 25% every 8 (TDNN-lite).
  static SchedulePolicy for_family(nn::TrunkFamily family);
  void validate() const;
};

/// initial_lr * (1 - decay_fraction)^floor(epoch / decay_every).
double schedule_lr(const SchedulePolicy& policy, int epoch);

}  // namespace veriforge::train
