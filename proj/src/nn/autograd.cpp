#include "veriforge/nn/autograd.hpp"

#include <unordered_set>

#include "veriforge/error.hpp"

namespace veriforge::nn {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::grad() const { return node_->ensure_grad(); }

void Var::zero_grad() {
  if (node_->grad.size() == node_->value.size()) {
    node_->grad.fill(0.0);
  } else {
    node_->ensure_grad();
  }
}

void Var::backward() const {
  if (node_->value.size() != 1) {
    throw UsageError("backward() needs a scalar output, got shape " + shape_str(node_->value.shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

Var make_result(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> backward_fn) {
#ifdef VERIFORGE_DEBUG_CHECKS
  if (!value.all_finite()) throw NumericError("non-finite value produced by op");
#endif
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!g_grad_enabled) return Var(node);
  bool any = false;
  for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
  if (!any) return Var(node);
  node->requires_grad = true;
  node->parents.reserve(parents.size());
  for (const auto& p : parents) node->parents.push_back(p.node());
  node->backward_fn = std::move(backward_fn);
  return Var(node);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Parameter::Parameter(std::string name, Tensor init) : name_(std::move(name)), var_(std::move(init), true) {}

}  // namespace veriforge::nn
