#pragma once

#include <span>
#include <string>
#include <vector>

#include "veriforge/nn/autograd.hpp"
#include "veriforge/nn/layers.hpp"
#include "veriforge/rng.hpp"

namespace veriforge::losses {

using nn::Var;

enum class LossKind { kSoftmax, kAmSoftmax, kAamSoftmax, kAp, kApSoftmax };

std::string to_string(LossKind k);
/// Accepts softmax, amsoftmax, aamsoftmax, ap, ap_softmax.
LossKind parse_loss_kind(const std::string& s);
/// AP and AP+softmax consume query/support pairs.
bool is_metric(LossKind k);
bool uses_classifier(LossKind k);

struct MarginConfig {
  double margin = 0.2;
  double scale = 30.0;
  void validate() const;
};

inline constexpr double kAcosClamp = 1e-7;
inline constexpr double kApInitW = 10.0;
inline constexpr double kApInitB = -5.0;
inline constexpr double kApMinW = 1e-6;

/// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(const Var& logits, std::span<const int> labels);

/// Cosine between each embedding row and each class row of `weight` [n_classes, E].
Var cosine_logits(const Var& embeddings, const Var& weight);

Var softmax_ce(const Var& embeddings, const Var& weight, std::span<const int> labels);
Var am_softmax(const Var& embeddings, const Var& weight, std::span<const int> labels, const MarginConfig& cfg);
Var aam_softmax(const Var& embeddings, const Var& weight, std::span<const int> labels, const MarginConfig& cfg);

/// query and support [B, E]; row i of both belongs to speaker i. w and b have shape {1}.
Var angular_prototypical(const Var& query, const Var& support, const Var& w, const Var& b);

/// AP plus softmax CE over concat(query, support); `labels` has 2B entries in that order.
Var ap_plus_softmax(const Var& query, const Var& support, const Var& weight, std::span<const int> labels,
                    const Var& w, const Var& b);

/// Loss together with the parameters it owns (classifier head, AP scale).
class Criterion {
 public:
  Criterion(LossKind kind, const MarginConfig& margin, int n_classes, int embedding_dim, Rng& rng);
  Criterion(const Criterion&) = delete;
  Criterion& operator=(const Criterion&) = delete;

  /// Classification kinds: one row per labelled segment. Metric kinds: the first
  /// half of the rows is the query set, the second half the support set.
  Var forward(const Var& embeddings, std::span<const int> labels) const;

  /// Keeps the AP scale positive; call after every optimizer step.
  void after_step();

  LossKind kind() const { return kind_; }
  const MarginConfig& margin() const { return margin_; }
  int n_classes() const { return n_classes_; }
  std::vector<nn::Parameter*> parameters() { return store_.parameters(); }
  std::vector<nn::NamedTensor> state() { return store_.state(); }

 private:
  LossKind kind_;
  MarginConfig margin_;
  int n_classes_;
  nn::ParamStore store_;
  nn::Parameter* head_ = nullptr;
  nn::Parameter* ap_w_ = nullptr;
  nn::Parameter* ap_b_ = nullptr;
};

}  // namespace veriforge::losses
