#include "veriforge/nn/layers.hpp"

#include <cmath>

#include "veriforge/error.hpp"

namespace veriforge::nn {

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  params_.emplace_back(name, std::move(init));
  return params_.back();
}

BatchNormStats& ParamStore::add_stats(const std::string& name, std::int64_t channels) {
  stats_.push_back({Tensor({channels}, 0.0), Tensor({channels}, 1.0)});
  stats_names_.push_back(name);
  return stats_.back();
}

std::vector<Parameter*> ParamStore::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<NamedTensor> ParamStore::state() {
  std::vector<NamedTensor> out;
  for (auto& p : params_) out.push_back({p.name(), &p.value()});
  for (std::size_t i = 0; i < stats_.size(); ++i) {
    out.push_back({stats_names_[i] + ".running_mean", &stats_[i].running_mean});
    out.push_back({stats_names_[i] + ".running_var", &stats_[i].running_var});
  }
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value().size();
  return n;
}

Tensor he_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  // Float-representable so checkpoints reproduce the initial state exactly.
  for (auto& v : t.values()) v = static_cast<float>(uniform(rng, -bound, bound));
  return t;
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, int in, int out, int k, int sh, int sw, Rng& rng)
    : stride_h(sh), stride_w(sw), pad(k / 2) {
  weight = &store.add(name + ".weight", he_uniform({out, in, k, k}, static_cast<std::int64_t>(in) * k * k, rng));
}

Var Conv2d::forward(const Var& x) const { return conv2d(x, weight->var(), stride_h, stride_w, pad, pad); }

Conv1d::Conv1d(ParamStore& store, const std::string& name, int in, int out, int k, int dil, Rng& rng)
    : dilation(dil), pad(dil * (k - 1) / 2) {
  weight = &store.add(name + ".weight", he_uniform({out, in, k}, static_cast<std::int64_t>(in) * k, rng));
  bias = &store.add(name + ".bias", Tensor({out}, 0.0));
}

Var Conv1d::forward(const Var& x) const {
  Var y = conv1d(x, weight->var(), dilation, pad);
  const auto c = static_cast<std::int64_t>(bias->value().size());
  return add(y, reshape(bias->var(), {c, 1}));
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, bool with_bias, Rng& rng) {
  weight = &store.add(name + ".weight", he_uniform({out, in}, in, rng));
  if (with_bias) bias = &store.add(name + ".bias", Tensor({out}, 0.0));
}

Var Linear::forward(const Var& x) const { return linear(x, weight->var(), bias ? bias->var() : Var()); }

BatchNorm::BatchNorm(ParamStore& store, const std::string& name, int channels) {
  gamma = &store.add(name + ".weight", Tensor({channels}, 1.0));
  beta = &store.add(name + ".bias", Tensor({channels}, 0.0));
  stats = &store.add_stats(name, channels);
}

Var BatchNorm::forward(const Var& x, bool training) const {
  return batch_norm(x, gamma->var(), beta->var(), *stats, training, kMomentum, kEps);
}

BasicBlock::BasicBlock(ParamStore& store, const std::string& name, int in, int out, int stride, Rng& rng)
    : conv1(store, name + ".conv1", in, out, 3, stride, stride, rng),
      conv2(store, name + ".conv2", out, out, 3, 1, 1, rng),
      bn1(store, name + ".bn1", out),
      bn2(store, name + ".bn2", out),
      projection(stride != 1 || in != out) {
  if (projection) {
    shortcut = Conv2d(store, name + ".shortcut", in, out, 1, stride, stride, rng);
    shortcut_bn = BatchNorm(store, name + ".shortcut_bn", out);
  }
}

Var BasicBlock::forward(const Var& x, bool training) const {
  Var y = relu(bn1.forward(conv1.forward(x), training));
  y = bn2.forward(conv2.forward(y), training);
  Var skip = projection ? shortcut_bn.forward(shortcut.forward(x), training) : x;
  return relu(add(y, skip));
}

Var attention_weights(const Var& frames, const Var& W, const Var& b, const Var& u) {
  if (frames.shape().size() != 3) throw UsageError("pooling expects frames [B, T, C], got " + shape_str(frames.shape()));
  const auto B = frames.shape()[0];
  const auto T = frames.shape()[1];
  if (T < 1) throw UsageError("pooling needs at least one frame");
  Var h = tanh(linear(frames, W, b));
  Var logits = linear(h, reshape(u, {1, static_cast<std::int64_t>(u.size())}), Var());
  return softmax(reshape(logits, {B, T}));
}

Var weighted_mean(const Var& frames, const Var& alpha) {
  const auto B = frames.shape()[0];
  const auto T = frames.shape()[1];
  return sum(mul(frames, reshape(alpha, {B, T, 1})), 1);
}

Var weighted_stats(const Var& frames, const Var& alpha, double eps) {
  const auto B = frames.shape()[0];
  const auto T = frames.shape()[1];
  Var a = reshape(alpha, {B, T, 1});
  Var mu = sum(mul(frames, a), 1);
  Var second = sum(mul(square(frames), a), 1);
  Var var = clamp(sub(second, square(mu)), eps, INFINITY);
  return concat({mu, sqrt(var)}, 1);
}

Var sap_pool(const Var& frames, const Var& W, const Var& b, const Var& u) {
  return weighted_mean(frames, attention_weights(frames, W, b, u));
}

Var asp_pool(const Var& frames, const Var& W, const Var& b, const Var& u) {
  return weighted_stats(frames, attention_weights(frames, W, b, u));
}

AttentivePooling::AttentivePooling(ParamStore& store, const std::string& name, PoolingKind k, int c, int hidden,
                                   Rng& rng)
    : kind(k), channels(c) {
  W = &store.add(name + ".attention.weight", he_uniform({hidden, c}, c, rng));
  b = &store.add(name + ".attention.bias", Tensor({hidden}, 0.0));
  u = &store.add(name + ".attention.context", he_uniform({hidden}, hidden, rng));
}

Var AttentivePooling::forward(const Var& frames) const {
  return kind == PoolingKind::kAsp ? asp_pool(frames, W->var(), b->var(), u->var())
                                   : sap_pool(frames, W->var(), b->var(), u->var());
}

}  // namespace veriforge::nn
