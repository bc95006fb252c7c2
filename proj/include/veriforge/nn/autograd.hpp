#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "veriforge/nn/tensor.hpp"

namespace veriforge::nn {

/// A value in the computation graph. `backward_fn` reads `grad` and accumulates
/// into the parents' grads.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad();
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const { return node_->value.item(); }

  /// Gradient accumulated so far; zero-filled if nothing reached this node.
  const Tensor& grad() const;
  void zero_grad();

  /// Reverse pass from a one-element output. Throws UsageError otherwise.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Non-trainable input.
inline Var constant(Tensor t) { return Var(std::move(t), false); }

/// Builds an op result. When grad mode is off or no parent needs a gradient,
/// the result is a plain constant and `backward_fn` is dropped.
Var make_result(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> backward_fn);

bool grad_enabled();

/// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Trainable tensor with a name used in checkpoints and diagnostics.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor init);

  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }
  const Var& var() const { return var_; }
  Tensor& value() { return var_.mutable_value(); }
  const Tensor& value() const { return var_.value(); }
  Tensor& grad() { return var_.node()->ensure_grad(); }
  void zero_grad() { var_.zero_grad(); }

 private:
  std::string name_;
  Var var_;
};

/// Named tensor reference; used for checkpoint state (parameters and buffers).
struct NamedTensor {
  std::string name;
  Tensor* tensor = nullptr;
};

}  // namespace veriforge::nn
