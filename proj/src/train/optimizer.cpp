#include "veriforge/train/optimizer.hpp"

#include <cmath>

#include "veriforge/error.hpp"

namespace veriforge::train {

OptimizerState OptimizerState::for_parameters(std::span<nn::Parameter* const> params) {
  OptimizerState s;
  for (const auto* p : params) {
    s.m.emplace_back(p->value().shape());
    s.v.emplace_back(p->value().shape());
  }
  return s;
}

void adam_step(std::span<nn::Parameter* const> params, OptimizerState& state, double lr, double weight_decay) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw UsageError("optimizer state holds " + std::to_string(state.m.size()) + " moments for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (auto* p : params) {
    if (!p->grad().all_finite()) throw NumericError("non-finite gradient in parameter " + p->name());
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    nn::Tensor& theta = params[k]->value();
    nn::Tensor& grad = params[k]->grad();
    nn::Tensor& m = state.m[k];
    nn::Tensor& v = state.v[k];
    if (m.shape() != theta.shape() || v.shape() != theta.shape()) {
      throw UsageError("optimizer moment shape mismatch for " + params[k]->name());
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] + weight_decay * theta[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    params[k]->zero_grad();
  }
}

SchedulePolicy SchedulePolicy::for_family(nn::TrunkFamily family) {
  SchedulePolicy p;
  switch (family) {
    case nn::TrunkFamily::kResnetQSap: p.decay_fraction = 0.05; p.decay_every = 5; break;
    case nn::TrunkFamily::kResnetHAsp: p.decay_fraction = 0.25; p.decay_every = 16; break;
    case nn::TrunkFamily::kTdnnLite: p.decay_fraction = 0.25; p.decay_every = 8; break;
  }
  return p;
}

void SchedulePolicy::validate() const {
  if (!(initial_lr > 0.0)) throw UsageError("initial learning rate must be > 0");
  if (!(decay_fraction > 0.0 && decay_fraction < 1.0)) throw UsageError("lr decay fraction must lie in (0, 1)");
  if (decay_every < 1) throw UsageError("lr decay interval must be >= 1 epoch");
  if (total_epochs < 0) throw UsageError("epoch count must be >= 0");
}

double schedule_lr(const SchedulePolicy& policy, int epoch) {
  if (epoch < 0) throw UsageError("epoch must be >= 0");
  return policy.initial_lr * std::pow(1.0 - policy.decay_fraction, epoch / policy.decay_every);
}

}  // namespace veriforge::train
