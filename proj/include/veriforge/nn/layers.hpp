#pragma once

#include <deque>
#include <string>
#include <vector>

#include "veriforge/nn/autograd.hpp"
#include "veriforge/nn/ops.hpp"
#include "veriforge/rng.hpp"

namespace veriforge::nn {

/// Owns parameters and batch-norm buffers with stable addresses.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init);
  BatchNormStats& add_stats(const std::string& name, std::int64_t channels);

  std::vector<Parameter*> parameters();
  /// Parameters followed by running statistics, in registration order.
  std::vector<NamedTensor> state();
  std::size_t parameter_count() const;

 private:
  std::deque<Parameter> params_;
  std::deque<BatchNormStats> stats_;
  std::vector<std::string> stats_names_;
};

/// He-uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor he_uniform(Shape shape, std::int64_t fan_in, Rng& rng);

struct Conv2d {
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int in, int out, int k, int stride_h, int stride_w, Rng& rng);
  Var forward(const Var& x) const;

  Parameter* weight = nullptr;
  int stride_h = 1, stride_w = 1, pad = 0;
};

/// conv1d with bias, stride 1, "same" padding for the given dilation.
struct Conv1d {
  Conv1d() = default;
  Conv1d(ParamStore& store, const std::string& name, int in, int out, int k, int dilation, Rng& rng);
  Var forward(const Var& x) const;

  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  int dilation = 1, pad = 0;
};

struct Linear {
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, bool with_bias, Rng& rng);
  Var forward(const Var& x) const;

  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
};

struct BatchNorm {
  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  BatchNorm() = default;
  BatchNorm(ParamStore& store, const std::string& name, int channels);
  /// Training mode updates the running statistics.
  Var forward(const Var& x, bool training) const;

  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  BatchNormStats* stats = nullptr;
};

/// Post-activation basic block: relu(bn(conv(relu(bn(conv(x))))) + shortcut(x)).
struct BasicBlock {
  BasicBlock() = default;
  BasicBlock(ParamStore& store, const std::string& name, int in, int out, int stride, Rng& rng);
  Var forward(const Var& x, bool training) const;

  Conv2d conv1, conv2;
  BatchNorm bn1, bn2;
  bool projection = false;
  Conv2d shortcut;
  BatchNorm shortcut_bn;
};

/// Frame attention: alpha = softmax_t(u . tanh(W x_t + b)). frames [B, T, C] -> alpha [B, T].
Var attention_weights(const Var& frames, const Var& W, const Var& b, const Var& u);

inline constexpr double kAspVarianceFloor = 1e-5;

/// Sum_t alpha_t x_t. frames [B, T, C], alpha [B, T] -> [B, C].
Var weighted_mean(const Var& frames, const Var& alpha);
/// concat(mu, sigma) with sigma = sqrt(max(Sum alpha x^2 - mu^2, eps)) -> [B, 2C].
Var weighted_stats(const Var& frames, const Var& alpha, double eps = kAspVarianceFloor);

Var sap_pool(const Var& frames, const Var& W, const Var& b, const Var& u);
Var asp_pool(const Var& frames, const Var& W, const Var& b, const Var& u);

enum class PoolingKind { kSap, kAsp };

struct AttentivePooling {
  AttentivePooling() = default;
  AttentivePooling(ParamStore& store, const std::string& name, PoolingKind kind, int channels, int hidden, Rng& rng);
  Var forward(const Var& frames) const;
  int output_dim() const { return kind == PoolingKind::kAsp ? 2 * channels : channels; }

  PoolingKind kind = PoolingKind::kSap;
  int channels = 0;
  Parameter* W = nullptr;
  Parameter* b = nullptr;
  Parameter* u = nullptr;
};

}  // namespace veriforge::nn
