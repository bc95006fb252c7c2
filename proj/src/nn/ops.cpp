#include "veriforge/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "veriforge/error.hpp"

namespace veriforge::nn {
namespace {

Tensor* parent_grad(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->ensure_grad() : nullptr;
}

const Tensor& parent_value(const Node& self, std::size_t i) { return self.parents[i]->value; }

int normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw UsageError("axis out of range");
  return axis;
}

struct Broadcast {
  Shape out;
  std::vector<std::int64_t> stride_a;
  std::vector<std::int64_t> stride_b;
  bool same = false;
  std::size_t count = 0;
};

std::vector<std::int64_t> padded_strides(const Shape& s, std::size_t rank, const Shape& out) {
  std::vector<std::int64_t> st(rank, 0);
  const std::size_t off = rank - s.size();
  std::int64_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    st[i + off] = (s[i] == 1 && out[i + off] != 1) ? 0 : acc;
    acc *= s[i];
  }
  return st;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    p.count = static_cast<std::size_t>(numel(a));
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  p.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i + a.size() >= r ? a[i + a.size() - r] : 1;
    const std::int64_t db = i + b.size() >= r ? b[i + b.size() - r] : 1;
    if (da != db && da != 1 && db != 1) {
      throw UsageError("shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
    }
    p.out[i] = da == 1 ? db : da;
  }
  p.stride_a = padded_strides(a, r, p.out);
  p.stride_b = padded_strides(b, r, p.out);
  p.count = static_cast<std::size_t>(numel(p.out));
  return p;
}

template <class F>
void for_each_broadcast(const Broadcast& p, F&& f) {
  if (p.same) {
    for (std::size_t i = 0; i < p.count; ++i) f(i, i, i);
    return;
  }
  const std::size_t r = p.out.size();
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t ai = 0, bi = 0;
  for (std::size_t oi = 0; oi < p.count; ++oi) {
    f(oi, static_cast<std::size_t>(ai), static_cast<std::size_t>(bi));
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ai += p.stride_a[d];
      bi += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ai -= p.stride_a[d] * p.out[d];
      bi -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

template <class Fwd, class BackA, class BackB>
Var binary(const Var& a, const Var& b, Fwd fwd, BackA back_a, BackB back_b) {
  auto p = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape()));
  Tensor out(p->out);
  const double* av = a.value().data();
  const double* bv = b.value().data();
  double* ov = out.data();
  for_each_broadcast(*p, [&](std::size_t oi, std::size_t ai, std::size_t bi) { ov[oi] = fwd(av[ai], bv[bi]); });
  return make_result(std::move(out), {a, b}, [p, back_a, back_b](Node& self) {
    const double* g = self.grad.data();
    const double* x = parent_value(self, 0).data();
    const double* y = parent_value(self, 1).data();
    const double* o = self.value.data();
    if (Tensor* ga = parent_grad(self, 0)) {
      double* gd = ga->data();
      for_each_broadcast(*p, [&](std::size_t oi, std::size_t ai, std::size_t bi) {
        gd[ai] += back_a(g[oi], x[ai], y[bi], o[oi]);
      });
    }
    if (Tensor* gb = parent_grad(self, 1)) {
      double* gd = gb->data();
      for_each_broadcast(*p, [&](std::size_t oi, std::size_t ai, std::size_t bi) {
        gd[bi] += back_b(g[oi], x[ai], y[bi], o[oi]);
      });
    }
  });
}

// df(x, y) receives the input and the output value.
template <class Fwd, class Df>
Var unary(const Var& a, Fwd fwd, Df df) {
  Tensor out(a.shape());
  const double* av = a.value().data();
  double* ov = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) ov[i] = fwd(av[i]);
  return make_result(std::move(out), {a}, [df](Node& self) {
    Tensor* ga = parent_grad(self, 0);
    if (!ga) return;
    const double* x = parent_value(self, 0).data();
    const double* y = self.value.data();
    const double* g = self.grad.data();
    double* gd = ga->data();
    for (std::size_t i = 0; i < self.value.size(); ++i) gd[i] += g[i] * df(x[i], y[i]);
  });
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit a;
  for (int i = 0; i < axis; ++i) a.outer *= static_cast<std::size_t>(s[i]);
  a.n = static_cast<std::size_t>(s[axis]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) a.inner *= static_cast<std::size_t>(s[i]);
  return a;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x + y; }, [](double g, double, double, double) { return g; },
      [](double g, double, double, double) { return g; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x - y; }, [](double g, double, double, double) { return g; },
      [](double g, double, double, double) { return -g; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x * y; }, [](double g, double, double y, double) { return g * y; },
      [](double g, double x, double, double) { return g * x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x / y; }, [](double g, double, double y, double) { return g / y; },
      [](double g, double x, double y, double) { return -g * x / (y * y); });
}

Var neg(const Var& a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(const Var& a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var cos(const Var& a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var acos(const Var& a) {
  return unary(
      a, [](double x) { return std::acos(x); }, [](double x, double) { return -1.0 / std::sqrt(1.0 - x * x); });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var sum(const Var& a, int axis, bool keepdim) {
  axis = normalize_axis(axis, a.shape().size());
  const auto sp = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + axis);
  }
  Tensor out(out_shape);
  const double* x = a.value().data();
  double* o = out.data();
  for (std::size_t i = 0; i < sp.outer; ++i) {
    for (std::size_t k = 0; k < sp.n; ++k) {
      const double* row = x + (i * sp.n + k) * sp.inner;
      double* dst = o + i * sp.inner;
      for (std::size_t j = 0; j < sp.inner; ++j) dst[j] += row[j];
    }
  }
  return make_result(std::move(out), {a}, [sp](Node& self) {
    Tensor* ga = parent_grad(self, 0);
    if (!ga) return;
    const double* g = self.grad.data();
    double* gd = ga->data();
    for (std::size_t i = 0; i < sp.outer; ++i) {
      for (std::size_t k = 0; k < sp.n; ++k) {
        double* dst = gd + (i * sp.n + k) * sp.inner;
        const double* src = g + i * sp.inner;
        for (std::size_t j = 0; j < sp.inner; ++j) dst[j] += src[j];
      }
    }
  });
}

Var mean(const Var& a, int axis, bool keepdim) {
  const int ax = normalize_axis(axis, a.shape().size());
  return scale(sum(a, ax, keepdim), 1.0 / static_cast<double>(a.shape()[ax]));
}

Var sum_all(const Var& a) { return sum(reshape(a, {static_cast<std::int64_t>(a.size())}), 0, false); }

Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.size())); }

Var softmax(const Var& a) {
  if (a.shape().empty()) throw UsageError("softmax of a rank-0 tensor");
  const auto n = static_cast<std::size_t>(a.shape().back());
  const std::size_t rows = a.size() / n;
  Tensor out(a.shape());
  const double* x = a.value().data();
  double* y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * n;
    double* yr = y + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
  }
  return make_result(std::move(out), {a}, [n, rows](Node& self) {
    Tensor* ga = parent_grad(self, 0);
    if (!ga) return;
    const double* y = self.value.data();
    const double* g = self.grad.data();
    double* gd = ga->data();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gd[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

Var log_softmax(const Var& a) {
  if (a.shape().empty()) throw UsageError("log_softmax of a rank-0 tensor");
  const auto n = static_cast<std::size_t>(a.shape().back());
  const std::size_t rows = a.size() / n;
  Tensor out(a.shape());
  const double* x = a.value().data();
  double* y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xr[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = xr[j] - lse;
  }
  return make_result(std::move(out), {a}, [n, rows](Node& self) {
    Tensor* ga = parent_grad(self, 0);
    if (!ga) return;
    const double* y = self.value.data();
    const double* g = self.grad.data();
    double* gd = ga->data();
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += g[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gd[r * n + j] += g[r * n + j] - std::exp(y[r * n + j]) * gs;
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_result(std::move(out), {a}, [](Node& self) {
    Tensor* ga = parent_grad(self, 0);
    if (!ga) return;
    const double* g = self.grad.data();
    double* gd = ga->data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gd[i] += g[i];
  });
}

Var permute(const Var& a, const std::vector<int>& perm) {
  const Shape& in = a.shape();
  const std::size_t r = in.size();
  if (perm.size() != r) throw UsageError("permute: permutation rank mismatch");
  std::vector<std::int64_t> in_stride(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_stride[i] = in_stride[i + 1] * in[i + 1];
  Shape out_shape(r);
  std::vector<std::int64_t> step(r);
  std::vector<bool> used(r, false);
  for (std::size_t i = 0; i < r; ++i) {
    const int p = perm[i];
    if (p < 0 || p >= static_cast<int>(r) || used[p]) throw UsageError("permute: invalid permutation");
    used[p] = true;
    out_shape[i] = in[p];
    step[i] = in_stride[p];
  }
  // src_index[k] = input offset of output element k.
  auto src_index = std::make_shared<std::vector<std::size_t>>(a.size());
  {
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t off = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      (*src_index)[k] = static_cast<std::size_t>(off);
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += step[d];
        if (idx[d] < out_shape[d]) break;
        off -= step[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }
  Tensor out(out_shape);
  const double* x = a.value().data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = x[(*src_index)[k]];
  return make_result(std::move(out), {a}, [src_index](Node& self) {
    Tensor* ga = parent_grad(self, 0);
    if (!ga) return;
    const double* g = self.grad.data();
    double* gd = ga->data();
    for (std::size_t k = 0; k < self.grad.size(); ++k) gd[(*src_index)[k]] += g[k];
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  axis = normalize_axis(axis, first.size());
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw UsageError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != axis && s[i] != first[i]) {
        throw UsageError("concat: shapes " + shape_str(first) + " and " + shape_str(s) + " differ off-axis");
      }
    }
    out_shape[axis] += s[axis];
  }
  const auto sp = split_at(out_shape, axis);
  for (const auto& p : parts) widths.push_back(static_cast<std::size_t>(p.shape()[axis]) * sp.inner);
  Tensor out(out_shape);
  const std::size_t row = sp.n * sp.inner;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* x = parts[k].value().data();
    for (std::size_t i = 0; i < sp.outer; ++i) {
      std::copy(x + i * widths[k], x + (i + 1) * widths[k], out.data() + i * row + offset);
    }
    offset += widths[k];
  }
  return make_result(std::move(out), parts, [widths, sp, row](Node& self) {
    const double* g = self.grad.data();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (Tensor* gk = parent_grad(self, k)) {
        double* gd = gk->data();
        for (std::size_t i = 0; i < sp.outer; ++i) {
          for (std::size_t j = 0; j < widths[k]; ++j) gd[i * widths[k] + j] += g[i * row + offset + j];
        }
      }
      offset += widths[k];
    }
  });
}

Var slice(const Var& a, int axis, std::int64_t start, std::int64_t length) {
  axis = normalize_axis(axis, a.shape().size());
  const auto sp = split_at(a.shape(), axis);
  if (start < 0 || length < 0 || static_cast<std::size_t>(start + length) > sp.n) {
    throw UsageError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) + ") out of range for " +
                     shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  const std::size_t width = static_cast<std::size_t>(length) * sp.inner;
  const std::size_t offset = static_cast<std::size_t>(start) * sp.inner;
  const std::size_t row = sp.n * sp.inner;
  Tensor out(out_shape);
  const double* x = a.value().data();
  for (std::size_t i = 0; i < sp.outer; ++i) std::copy(x + i * row + offset, x + i * row + offset + width, out.data() + i * width);
  return make_result(std::move(out), {a}, [sp, width, offset, row](Node& self) {
    Tensor* ga = parent_grad(self, 0);
    if (!ga) return;
    const double* g = self.grad.data();
    double* gd = ga->data();
    for (std::size_t i = 0; i < sp.outer; ++i)
      for (std::size_t j = 0; j < width; ++j) gd[i * row + offset + j] += g[i * width + j];
  });
}

Var pick(const Var& a, std::span<const int> index) {
  if (a.shape().size() != 2) throw UsageError("pick expects a rank-2 tensor");
  const auto n = static_cast<std::size_t>(a.shape()[0]);
  const auto c = static_cast<std::size_t>(a.shape()[1]);
  if (index.size() != n) throw UsageError("pick: index count does not match rows");
  auto idx = std::make_shared<std::vector<int>>(index.begin(), index.end());
  for (int i : *idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= c) throw UsageError("pick: index " + std::to_string(i) + " out of range");
  }
  Tensor out({static_cast<std::int64_t>(n)});
  for (std::size_t r = 0; r < n; ++r) out[r] = a.value()[r * c + static_cast<std::size_t>((*idx)[r])];
  return make_result(std::move(out), {a}, [idx, c](Node& self) {
    Tensor* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < idx->size(); ++r) (*ga)[r * c + static_cast<std::size_t>((*idx)[r])] += self.grad[r];
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
    throw UsageError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto M = static_cast<std::size_t>(a.shape()[0]);
  const auto K = static_cast<std::size_t>(a.shape()[1]);
  const auto N = static_cast<std::size_t>(b.shape()[1]);
  Tensor out({static_cast<std::int64_t>(M), static_cast<std::int64_t>(N)});
  const double* x = a.value().data();
  const double* y = b.value().data();
  double* o = out.data();
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      const double v = x[i * K + k];
      for (std::size_t j = 0; j < N; ++j) o[i * N + j] += v * y[k * N + j];
    }
  }
  return make_result(std::move(out), {a, b}, [M, K, N](Node& self) {
    const double* g = self.grad.data();
    const double* x = parent_value(self, 0).data();
    const double* y = parent_value(self, 1).data();
    if (Tensor* ga = parent_grad(self, 0)) {
      double* gd = ga->data();
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
          double acc = 0.0;
          for (std::size_t j = 0; j < N; ++j) acc += g[i * N + j] * y[k * N + j];
          gd[i * K + k] += acc;
        }
    }
    if (Tensor* gb = parent_grad(self, 1)) {
      double* gd = gb->data();
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
          const double v = x[i * K + k];
          for (std::size_t j = 0; j < N; ++j) gd[k * N + j] += v * g[i * N + j];
        }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (weight.shape().size() != 2 || x.shape().empty() || x.shape().back() != weight.shape()[1]) {
    throw UsageError("linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(weight.shape()));
  }
  const auto in = static_cast<std::size_t>(weight.shape()[1]);
  const auto outd = static_cast<std::size_t>(weight.shape()[0]);
  const bool has_bias = bias.defined();
  if (has_bias && (bias.shape().size() != 1 || static_cast<std::size_t>(bias.shape()[0]) != outd)) {
    throw UsageError("linear: bias shape " + shape_str(bias.shape()));
  }
  const std::size_t rows = x.size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = static_cast<std::int64_t>(outd);
  Tensor out(out_shape);
  const double* xv = x.value().data();
  const double* w = weight.value().data();
  const double* bv = has_bias ? bias.value().data() : nullptr;
  double* o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * in;
    for (std::size_t j = 0; j < outd; ++j) {
      const double* wr = w + j * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      o[r * outd + j] = has_bias ? acc + bv[j] : acc;
    }
  }
  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result(std::move(out), parents, [rows, in, outd, has_bias](Node& self) {
    const double* g = self.grad.data();
    const double* xv = parent_value(self, 0).data();
    const double* w = parent_value(self, 1).data();
    if (Tensor* gx = parent_grad(self, 0)) {
      double* gd = gx->data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < outd; ++j) {
          const double gv = g[r * outd + j];
          const double* wr = w + j * in;
          double* dst = gd + r * in;
          for (std::size_t i = 0; i < in; ++i) dst[i] += gv * wr[i];
        }
    }
    if (Tensor* gw = parent_grad(self, 1)) {
      double* gd = gw->data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < outd; ++j) {
          const double gv = g[r * outd + j];
          const double* xr = xv + r * in;
          double* dst = gd + j * in;
          for (std::size_t i = 0; i < in; ++i) dst[i] += gv * xr[i];
        }
    }
    if (has_bias) {
      if (Tensor* gb = parent_grad(self, 2)) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < outd; ++j) (*gb)[j] += g[r * outd + j];
      }
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, bool training,
               double momentum, double eps) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw UsageError("batch_norm expects at least [B, C]");
  const auto B = static_cast<std::size_t>(s[0]);
  const auto C = static_cast<std::size_t>(s[1]);
  const std::size_t inner = x.size() / (B * C);
  const std::size_t count = B * inner;
  if (gamma.size() != C || beta.size() != C || stats.running_mean.size() != C || stats.running_var.size() != C) {
    throw UsageError("batch_norm: channel count mismatch for input " + shape_str(s));
  }
  if (training && count < 2) throw UsageError("batch_norm: training mode needs more than one value per channel");

  const double* xv = x.value().data();
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(C);
  std::vector<double> mu(C), var(C);
  if (training) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const double* p = xv + (b * C + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) mu[c] += p[i];
      }
    for (auto& m : mu) m /= static_cast<double>(count);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const double* p = xv + (b * C + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = p[i] - mu[c];
          var[c] += d * d;
        }
      }
    for (auto& v : var) v /= static_cast<double>(count);
    const double unbias = static_cast<double>(count) / static_cast<double>(count - 1);
    for (std::size_t c = 0; c < C; ++c) {
      stats.running_mean[c] = (1.0 - momentum) * stats.running_mean[c] + momentum * mu[c];
      stats.running_var[c] = (1.0 - momentum) * stats.running_var[c] + momentum * var[c] * unbias;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = stats.running_mean[c];
      var[c] = stats.running_var[c];
    }
  }
  for (std::size_t c = 0; c < C; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor out(s);
  const double* gv = gamma.value().data();
  const double* bv = beta.value().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (b * C + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const double h = (xv[base + i] - mu[c]) * (*inv_std)[c];
        (*xhat)[base + i] = h;
        out[base + i] = gv[c] * h + bv[c];
      }
    }

  return make_result(std::move(out), {x, gamma, beta}, [xhat, inv_std, B, C, inner, count, training](Node& self) {
    const double* g = self.grad.data();
    const double* gam = parent_value(self, 1).data();
    std::vector<double> sum_g(C, 0.0), sum_gh(C, 0.0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t base = (b * C + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          sum_g[c] += g[base + i];
          sum_gh[c] += g[base + i] * (*xhat)[base + i];
        }
      }
    if (Tensor* gx = parent_grad(self, 0)) {
      const double m = static_cast<double>(count);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t base = (b * C + c) * inner;
          const double k = gam[c] * (*inv_std)[c];
          for (std::size_t i = 0; i < inner; ++i) {
            if (training) {
              (*gx)[base + i] += k * (g[base + i] - sum_g[c] / m - (*xhat)[base + i] * sum_gh[c] / m);
            } else {
              (*gx)[base + i] += k * g[base + i];
            }
          }
        }
    }
    if (Tensor* gg = parent_grad(self, 1)) {
      for (std::size_t c = 0; c < C; ++c) (*gg)[c] += sum_gh[c];
    }
    if (Tensor* gb = parent_grad(self, 2)) {
      for (std::size_t c = 0; c < C; ++c) (*gb)[c] += sum_g[c];
    }
  });
}

Var l2_normalize(const Var& a, double eps) {
  auto norm = sqrt(add_scalar(sum(square(a), -1, true), eps));
  return div(a, norm);
}

}  // namespace veriforge::nn
