#pragma once

// Random small-shape gradient-check cases for every differentiable op, both pooling
// layers and the five loss configurations. Shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "test_util.hpp"
#include "veriforge/losses/losses.hpp"
#include "veriforge/nn/gradcheck.hpp"
#include "veriforge/nn/ops.hpp"
#include "veriforge/nn/layers.hpp"

namespace vf_test {

using veriforge::Rng;
using namespace veriforge::nn;

enum class GradGroup { kOp, kPooling, kLoss };

struct GradCase {
  std::string name;
  GradGroup group;
  std::function<std::pair<std::vector<Var>, LossFn>(Rng&)> build;
};

inline Var leaf(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  return Var(random_tensor(std::move(s), rng, lo, hi), true);
}

inline std::int64_t dim(Rng& rng, int lo = 1, int hi = 4) { return veriforge::uniform_int(rng, lo, hi); }

// Contracts an op output with a fixed random tensor so every output coordinate matters.
template <class F>
std::pair<std::vector<Var>, LossFn> contracted(std::vector<Var> inputs, F f, Rng& rng) {
  const Tensor w = random_tensor(f().shape(), rng);
  LossFn loss = [f, w] { return sum_all(mul(f(), constant(w))); };
  return {std::move(inputs), loss};
}

inline std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
  std::vector<int> l(n);
  for (auto& x : l) x = static_cast<int>(veriforge::uniform_int(rng, 0, classes - 1));
  return l;
}

inline std::vector<GradCase> grad_cases() {
  using veriforge::uniform;
  using veriforge::uniform_int;
  std::vector<GradCase> cases;
  auto op = [&](std::string name, auto build) { cases.push_back({std::move(name), GradGroup::kOp, build}); };

  struct U {
    const char* name;
    Var (*f)(const Var&);
    double lo, hi;
  };
  const U unary[] = {{"relu", relu, -1, 1},       {"tanh", tanh, -2, 2},       {"exp", exp, -1, 1},
                     {"log", log, 0.5, 3},        {"sqrt", sqrt, 0.5, 3},      {"square", square, -2, 2},
                     {"cos", cos, -3, 3},         {"acos", acos, -0.9, 0.9},   {"neg", neg, -1, 1},
                     {"softmax", softmax, -2, 2}, {"log_softmax", log_softmax, -2, 2},
                     {"l2_normalize", [](const Var& a) { return l2_normalize(a); }, -1, 1}};
  for (const auto& u : unary) {
    op(u.name, [u](Rng& rng) {
      Var x = leaf({dim(rng), dim(rng, 2, 5)}, rng, u.lo, u.hi);
      return contracted({x}, [=] { return u.f(x); }, rng);
    });
  }
  op("scale/add_scalar/clamp", [](Rng& rng) {
    Var x = leaf({dim(rng), dim(rng, 2, 5)}, rng, -2, 2);
    const double c = uniform(rng, -3, 3);
    return contracted({x}, [=] { return clamp(add_scalar(scale(x, c), 0.3), -1.5, 1.5); }, rng);
  });
  using Bin = Var (*)(const Var&, const Var&);
  const std::pair<const char*, Bin> binary[] = {{"add", add}, {"sub", sub}, {"mul", mul}, {"div", div}};
  for (const auto& [name, f] : binary) {
    op(name, [f = f](Rng& rng) {
      const auto a0 = dim(rng), a1 = dim(rng), a2 = dim(rng, 2, 4);
      Shape sb = {uniform_int(rng, 0, 1) ? a0 : 1, uniform_int(rng, 0, 1) ? a1 : 1, a2};
      if (uniform_int(rng, 0, 2) == 0) sb = {a2};
      Var a = leaf({a0, a1, a2}, rng);
      Var b = leaf(sb, rng, 0.5, 2.0);
      return contracted({a, b}, [=] { return f(a, b); }, rng);
    });
  }
  op("sum/mean axis", [](Rng& rng) {
    Var x = leaf({dim(rng, 2, 4), dim(rng, 2, 4), dim(rng, 2, 4)}, rng);
    const int axis = static_cast<int>(uniform_int(rng, 0, 2));
    const bool keep = uniform_int(rng, 0, 1) == 1;
    return contracted({x}, [=] { return add(sum(x, axis, keep), scale(mean(x, axis, keep), 0.7)); }, rng);
  });
  op("mean_all", [](Rng& rng) {
    Var x = leaf({dim(rng), dim(rng)}, rng);
    LossFn f = [=] { return mean_all(square(x)); };
    return std::make_pair(std::vector<Var>{x}, f);
  });
  op("reshape/permute", [](Rng& rng) {
    Var x = leaf({dim(rng, 2, 3), dim(rng, 2, 3), dim(rng, 2, 3)}, rng);
    std::vector<int> perm = {0, 1, 2};
    std::shuffle(perm.begin(), perm.end(), rng);
    const Shape flat = {x.shape()[0] * x.shape()[1], x.shape()[2]};
    return contracted({x}, [=] { return permute(reshape(reshape(x, flat), x.shape()), perm); }, rng);
  });
  op("concat/slice", [](Rng& rng) {
    const int axis = static_cast<int>(uniform_int(rng, 0, 1));
    Shape sa = {dim(rng, 2, 4), dim(rng, 2, 4)};
    Shape sb = sa;
    sb[static_cast<std::size_t>(axis)] = dim(rng);
    Var a = leaf(sa, rng), b = leaf(sb, rng);
    const auto total = sa[static_cast<std::size_t>(axis)] + sb[static_cast<std::size_t>(axis)];
    const auto start = uniform_int(rng, 0, total - 1);
    const auto len = uniform_int(rng, 1, total - start);
    return contracted({a, b}, [=] { return slice(concat({a, b}, axis), axis, start, len); }, rng);
  });
  op("pick", [](Rng& rng) {
    Var x = leaf({dim(rng, 2, 5), dim(rng, 2, 5)}, rng);
    std::vector<int> idx(static_cast<std::size_t>(x.shape()[0]));
    for (auto& i : idx) i = static_cast<int>(uniform_int(rng, 0, x.shape()[1] - 1));
    LossFn f = [=] { return sum_all(square(pick(log_softmax(x), idx))); };
    return std::make_pair(std::vector<Var>{x}, f);
  });
  op("matmul", [](Rng& rng) {
    Var a = leaf({dim(rng), dim(rng)}, rng);
    Var b = leaf({a.shape()[1], dim(rng)}, rng);
    return contracted({a, b}, [=] { return matmul(a, b); }, rng);
  });
  op("linear", [](Rng& rng) {
    const auto in = dim(rng), out = dim(rng);
    Var x = leaf({dim(rng), dim(rng), in}, rng), W = leaf({out, in}, rng), bias = leaf({out}, rng);
    return contracted({x, W, bias}, [=] { return linear(x, W, bias); }, rng);
  });
  op("conv2d", [](Rng& rng) {
    const int s = static_cast<int>(uniform_int(rng, 1, 2));
    Var x = leaf({dim(rng, 1, 2), dim(rng, 1, 2), dim(rng, 3, 5), dim(rng, 3, 5)}, rng);
    Var w = leaf({dim(rng, 1, 3), x.shape()[1], 3, 3}, rng);
    return contracted({x, w}, [=] { return conv2d(x, w, s, s, 1, 1); }, rng);
  });
  op("conv1d", [](Rng& rng) {
    const int d = static_cast<int>(uniform_int(rng, 1, 3));
    Var x = leaf({dim(rng, 1, 2), dim(rng, 1, 3), dim(rng, 5, 8)}, rng);
    Var w = leaf({dim(rng, 1, 3), x.shape()[1], 3}, rng);
    return contracted({x, w}, [=] { return conv1d(x, w, d, d); }, rng);
  });
  op("batch_norm", [](Rng& rng) {
    const auto C = dim(rng, 1, 3);
    Var x = leaf({dim(rng, 2, 4), C, dim(rng, 1, 3)}, rng, -2, 2);
    Var g = leaf({C}, rng, 0.5, 1.5), b = leaf({C}, rng);
    auto stats = std::make_shared<BatchNormStats>(BatchNormStats{Tensor({C}, 0.0), Tensor({C}, 1.0)});
    return contracted({x, g, b}, [=] { return batch_norm(x, g, b, *stats, true, 0.1, 1e-5); }, rng);
  });

  for (bool asp : {false, true}) {
    cases.push_back({asp ? "asp_pool" : "sap_pool", GradGroup::kPooling, [asp](Rng& rng) {
                       const auto C = dim(rng, 1, 4);
                       Var x = leaf({dim(rng, 1, 2), dim(rng, 1, 5), C}, rng);
                       Var W = leaf({C, C}, rng), b = leaf({C}, rng), u = leaf({C}, rng);
                       return contracted({x, W, b, u}, [=] { return (asp ? asp_pool : sap_pool)(x, W, b, u); }, rng);
                     }});
  }

  using namespace veriforge::losses;
  enum L { kSoftmax, kAm, kAam, kAp, kApSoftmax };
  const std::pair<const char*, L> losses[] = {
      {"softmax", kSoftmax}, {"amsoftmax", kAm}, {"aamsoftmax", kAam}, {"ap", kAp}, {"ap+softmax", kApSoftmax}};
  for (const auto& [name, kind] : losses) {
    cases.push_back({name, GradGroup::kLoss, [kind = kind](Rng& rng) {
                       const auto B = dim(rng, 2, 4), E = dim(rng, 2, 5), C = dim(rng, 2, 4);
                       Var e = leaf({B, E}, rng), w = leaf({C, E}, rng);
                       Var q = leaf({B, E}, rng), s = leaf({B, E}, rng);
                       Var aw = leaf({}, rng, 1, 10), ab = leaf({}, rng, -5, 0);
                       const auto y = random_labels(static_cast<std::size_t>(B), static_cast<int>(C), rng);
                       const auto y2 = random_labels(static_cast<std::size_t>(2 * B), static_cast<int>(C), rng);
                       const MarginConfig cfg{uniform(rng, 0.0, 0.4), uniform(rng, 1.0, 30.0)};
                       switch (kind) {
                         case kSoftmax:
                           return std::make_pair(std::vector<Var>{e, w}, LossFn([=] { return softmax_ce(e, w, y); }));
                         case kAm:
                           return std::make_pair(std::vector<Var>{e, w}, LossFn([=] { return am_softmax(e, w, y, cfg); }));
                         case kAam:
                           return std::make_pair(std::vector<Var>{e, w}, LossFn([=] { return aam_softmax(e, w, y, cfg); }));
                         case kAp:
                           return std::make_pair(std::vector<Var>{q, s, aw, ab},
                                                 LossFn([=] { return angular_prototypical(q, s, aw, ab); }));
                         case kApSoftmax:
                           break;
                       }
                       return std::make_pair(std::vector<Var>{q, s, w, aw, ab},
                                             LossFn([=] { return ap_plus_softmax(q, s, w, y2, aw, ab); }));
                     }});
  }
  return cases;
}

struct GradCaseResult {
  double max_rel_error = 0.0;
  int worst_case = -1;
  std::string worst;
};

// Runs `n` seeded instances of one case and keeps the worst.
inline GradCaseResult run_grad_case(const GradCase& c, int n = 20) {
  GradCaseResult out;
  for (int k = 0; k < n; ++k) {
    Rng rng(static_cast<std::uint64_t>(1000 + k));
    auto [inputs, loss] = c.build(rng);
    GradCheckOptions opt;
    opt.seed = static_cast<std::uint64_t>(k);
    const auto r = grad_check(loss, inputs, opt);
    if (r.max_rel_error >= out.max_rel_error) out = {r.max_rel_error, k, r.worst};
  }
  return out;
}

}  // namespace vf_test
