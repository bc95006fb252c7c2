#include "veriforge/losses/losses.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "veriforge/error.hpp"
#include "veriforge/nn/ops.hpp"

namespace veriforge::losses {
namespace {

using nn::Tensor;

void check_labels(std::span<const int> labels, std::int64_t rows, std::int64_t classes) {
  if (static_cast<std::int64_t>(labels.size()) != rows) {
    throw UsageError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
  }
  for (int l : labels) {
    if (l < 0 || l >= classes) {
      throw UsageError("label " + std::to_string(l) + " out of range [0, " + std::to_string(classes) + ")");
    }
  }
}

Tensor one_hot(std::span<const int> labels, std::int64_t classes) {
  Tensor t({static_cast<std::int64_t>(labels.size()), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) t[i * classes + labels[i]] = 1.0;
  return t;
}

void check_embeddings(const Var& e, const Var& weight) {
  if (e.shape().size() != 2 || weight.shape().size() != 2 || e.shape()[1] != weight.shape()[1]) {
    throw UsageError("embeddings " + nn::shape_str(e.shape()) + " do not match classifier " +
                     nn::shape_str(weight.shape()));
  }
}

}  // namespace

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kSoftmax: return "softmax";
    case LossKind::kAmSoftmax: return "amsoftmax";
    case LossKind::kAamSoftmax: return "aamsoftmax";
    case LossKind::kAp: return "ap";
    case LossKind::kApSoftmax: return "ap_softmax";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "softmax") return LossKind::kSoftmax;
  if (s == "amsoftmax") return LossKind::kAmSoftmax;
  if (s == "aamsoftmax") return LossKind::kAamSoftmax;
  if (s == "ap") return LossKind::kAp;
  if (s == "ap_softmax") return LossKind::kApSoftmax;
  throw UsageError("unknown loss '" + s + "' (expected softmax, amsoftmax, aamsoftmax, ap or ap_softmax)");
}

bool is_metric(LossKind k) { return k == LossKind::kAp || k == LossKind::kApSoftmax; }
bool uses_classifier(LossKind k) { return k != LossKind::kAp; }

void MarginConfig::validate() const {
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw UsageError("margin must be >= 0");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw UsageError("scale must be > 0");
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  check_labels(labels, logits.shape()[0], logits.shape()[1]);
  return nn::neg(nn::mean_all(nn::pick(nn::log_softmax(logits), labels)));
}

Var cosine_logits(const Var& embeddings, const Var& weight) {
  check_embeddings(embeddings, weight);
  return nn::linear(nn::l2_normalize(embeddings), nn::l2_normalize(weight), Var());
}

Var softmax_ce(const Var& embeddings, const Var& weight, std::span<const int> labels) {
  check_embeddings(embeddings, weight);
  return cross_entropy(nn::linear(embeddings, weight, Var()), labels);
}

Var am_softmax(const Var& embeddings, const Var& weight, std::span<const int> labels, const MarginConfig& cfg) {
  cfg.validate();
  Var cos = cosine_logits(embeddings, weight);
  check_labels(labels, cos.shape()[0], cos.shape()[1]);
  Tensor shift = one_hot(labels, cos.shape()[1]);
  for (auto& v : shift.values()) v *= cfg.margin;
  return cross_entropy(nn::scale(nn::sub(cos, nn::constant(std::move(shift))), cfg.scale), labels);
}

Var aam_softmax(const Var& embeddings, const Var& weight, std::span<const int> labels, const MarginConfig& cfg) {
  cfg.validate();
  Var cos = cosine_logits(embeddings, weight);
  check_labels(labels, cos.shape()[0], cos.shape()[1]);
  const double m = cfg.margin;
  Var c = nn::clamp(cos, -1.0 + kAcosClamp, 1.0 - kAcosClamp);
  Var theta = nn::acos(c);
  // Where theta + m would pass pi, fall back to the monotone c - m sin(m).
  Tensor within(theta.shape());
  for (std::size_t i = 0; i < within.size(); ++i) within[i] = theta.value()[i] + m <= std::numbers::pi ? 1.0 : 0.0;
  Tensor beyond(theta.shape());
  for (std::size_t i = 0; i < beyond.size(); ++i) beyond[i] = 1.0 - within[i];
  Var shifted = nn::add(nn::mul(nn::cos(nn::add_scalar(theta, m)), nn::constant(within)),
                        nn::mul(nn::add_scalar(c, -m * std::sin(m)), nn::constant(beyond)));
  Tensor hot = one_hot(labels, cos.shape()[1]);
  Tensor cold(hot.shape());
  for (std::size_t i = 0; i < cold.size(); ++i) cold[i] = 1.0 - hot[i];
  Var logits = nn::add(nn::mul(cos, nn::constant(std::move(cold))), nn::mul(shifted, nn::constant(std::move(hot))));
  return cross_entropy(nn::scale(logits, cfg.scale), labels);
}

Var angular_prototypical(const Var& query, const Var& support, const Var& w, const Var& b) {
  if (query.shape().size() != 2 || query.shape() != support.shape()) {
    throw UsageError("AP query " + nn::shape_str(query.shape()) + " and support " + nn::shape_str(support.shape()) +
                     " must be equal [B, E]");
  }
  const auto B = query.shape()[0];
  if (B < 2) throw UsageError("angular prototypical loss needs at least 2 speakers per batch");
  Var cos = nn::linear(nn::l2_normalize(query), nn::l2_normalize(support), Var());
  Var S = nn::add(nn::mul(cos, w), b);
  std::vector<int> diag(static_cast<std::size_t>(B));
  std::iota(diag.begin(), diag.end(), 0);
  return cross_entropy(S, diag);
}

Var ap_plus_softmax(const Var& query, const Var& support, const Var& weight, std::span<const int> labels,
                    const Var& w, const Var& b) {
  Var ap = angular_prototypical(query, support, w, b);
  return nn::add(ap, softmax_ce(nn::concat({query, support}, 0), weight, labels));
}

Criterion::Criterion(LossKind kind, const MarginConfig& margin, int n_classes, int embedding_dim, Rng& rng)
    : kind_(kind), margin_(margin), n_classes_(n_classes) {
  margin_.validate();
  if (uses_classifier(kind)) {
    if (n_classes < 1) throw UsageError("classifier needs at least one class");
    head_ = &store_.add("head.weight", nn::he_uniform({n_classes, embedding_dim}, embedding_dim, rng));
  }
  if (is_metric(kind)) {
    ap_w_ = &store_.add("ap.w", Tensor({1}, kApInitW));
    ap_b_ = &store_.add("ap.b", Tensor({1}, kApInitB));
  }
}

Var Criterion::forward(const Var& embeddings, std::span<const int> labels) const {
  switch (kind_) {
    case LossKind::kSoftmax: return softmax_ce(embeddings, head_->var(), labels);
    case LossKind::kAmSoftmax: return am_softmax(embeddings, head_->var(), labels, margin_);
    case LossKind::kAamSoftmax: return aam_softmax(embeddings, head_->var(), labels, margin_);
    case LossKind::kAp:
    case LossKind::kApSoftmax: break;
  }
  const auto n = embeddings.shape()[0];
  if (n % 2 != 0) throw UsageError("metric batch must hold query and support halves");
  const auto B = n / 2;
  Var query = nn::slice(embeddings, 0, 0, B);
  Var support = nn::slice(embeddings, 0, B, B);
  if (kind_ == LossKind::kAp) return angular_prototypical(query, support, ap_w_->var(), ap_b_->var());
  return ap_plus_softmax(query, support, head_->var(), labels, ap_w_->var(), ap_b_->var());
}

void Criterion::after_step() {
  if (ap_w_ && ap_w_->value()[0] < kApMinW) ap_w_->value()[0] = kApMinW;
}

}  // namespace veriforge::losses
