#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <memory>
#include <thread>
#include <vector>

#include "veriforge/error.hpp"
#include "veriforge/nn/ops.hpp"

namespace veriforge::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::atomic<int> g_threads{1};

struct Geometry {
  std::size_t B, C, H, W, O, kh, kw, Ho, Wo;
  int sh, sw, ph, pw, dh, dw;
  std::size_t rows() const { return C * kh * kw; }
  std::size_t cols() const { return Ho * Wo; }
};

void im2col(const Geometry& g, const double* x, double* col) {
  for (std::size_t c = 0; c < g.C; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* dst = col + ((c * g.kh + i) * g.kw + j) * g.cols();
        for (std::size_t oy = 0; oy < g.Ho; ++oy) {
          const long y = static_cast<long>(oy) * g.sh - g.ph + static_cast<long>(i) * g.dh;
          const bool row_ok = y >= 0 && y < static_cast<long>(g.H);
          for (std::size_t ox = 0; ox < g.Wo; ++ox) {
            const long xx = static_cast<long>(ox) * g.sw - g.pw + static_cast<long>(j) * g.dw;
            dst[oy * g.Wo + ox] =
                (row_ok && xx >= 0 && xx < static_cast<long>(g.W)) ? x[(c * g.H + y) * g.W + xx] : 0.0;
          }
        }
      }
}

void col2im(const Geometry& g, const double* col, double* x) {
  for (std::size_t c = 0; c < g.C; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* src = col + ((c * g.kh + i) * g.kw + j) * g.cols();
        for (std::size_t oy = 0; oy < g.Ho; ++oy) {
          const long y = static_cast<long>(oy) * g.sh - g.ph + static_cast<long>(i) * g.dh;
          if (y < 0 || y >= static_cast<long>(g.H)) continue;
          for (std::size_t ox = 0; ox < g.Wo; ++ox) {
            const long xx = static_cast<long>(ox) * g.sw - g.pw + static_cast<long>(j) * g.dw;
            if (xx >= 0 && xx < static_cast<long>(g.W)) x[(c * g.H + y) * g.W + xx] += src[oy * g.Wo + ox];
          }
        }
      }
}

// Runs fn(b) for b in [0, n); each index touches disjoint memory.
template <class F>
void parallel_for(std::size_t n, F&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(g_threads.load()), n);
  if (workers <= 1) {
    for (std::size_t b = 0; b < n; ++b) fn(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < n; b = next++) fn(b);
    });
  }
  for (auto& th : pool) th.join();
}

Var conv_general(const Var& x, const Var& weight, Geometry g) {
  const double* xv = x.value().data();
  const double* wv = weight.value().data();
  Tensor out({static_cast<std::int64_t>(g.B), static_cast<std::int64_t>(g.O), static_cast<std::int64_t>(g.Ho),
              static_cast<std::int64_t>(g.Wo)});
  double* ov = out.data();
  const std::size_t in_step = g.C * g.H * g.W;
  const std::size_t out_step = g.O * g.cols();
  parallel_for(g.B, [&](std::size_t b) {
    std::vector<double> col(g.rows() * g.cols());
    im2col(g, xv + b * in_step, col.data());
    ConstMapMat w(wv, g.O, g.rows());
    ConstMapMat cm(col.data(), g.rows(), g.cols());
    MapMat o(ov + b * out_step, g.O, g.cols());
    o.noalias() = w * cm;
  });
  return make_result(std::move(out), {x, weight}, [g, in_step, out_step](Node& self) {
    const double* gv = self.grad.data();
    const double* xv = self.parents[0]->value.data();
    const double* wv = self.parents[1]->value.data();
    Tensor* gx = self.parents[0]->requires_grad ? &self.parents[0]->ensure_grad() : nullptr;
    Tensor* gw = self.parents[1]->requires_grad ? &self.parents[1]->ensure_grad() : nullptr;
    ConstMapMat w(wv, g.O, g.rows());
    if (gx) {
      parallel_for(g.B, [&](std::size_t b) {
        std::vector<double> dcol(g.rows() * g.cols());
        MapMat dc(dcol.data(), g.rows(), g.cols());
        dc.noalias() = w.transpose() * ConstMapMat(gv + b * out_step, g.O, g.cols());
        col2im(g, dcol.data(), gx->data() + b * in_step);
      });
    }
    if (gw) {
      // Sequential over samples so the sum order is fixed.
      MapMat dw(gw->data(), g.O, g.rows());
      std::vector<double> col(g.rows() * g.cols());
      for (std::size_t b = 0; b < g.B; ++b) {
        im2col(g, xv + b * in_step, col.data());
        dw.noalias() += ConstMapMat(gv + b * out_step, g.O, g.cols()) *
                        ConstMapMat(col.data(), g.rows(), g.cols()).transpose();
      }
    }
  });
}

std::size_t out_extent(std::size_t n, std::size_t k, int stride, int pad, int dil) {
  const long span = static_cast<long>(dil) * (static_cast<long>(k) - 1) + 1;
  const long padded = static_cast<long>(n) + 2L * pad;
  if (padded < span) throw UsageError("convolution input is smaller than the kernel");
  return static_cast<std::size_t>((padded - span) / stride + 1);
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, int stride_h, int stride_w, int pad_h, int pad_w) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1]) {
    throw UsageError("conv2d: input " + shape_str(xs) + " does not match weight " + shape_str(ws));
  }
  if (stride_h < 1 || stride_w < 1 || pad_h < 0 || pad_w < 0) throw UsageError("conv2d: invalid stride or padding");
  Geometry g{};
  g.B = static_cast<std::size_t>(xs[0]);
  g.C = static_cast<std::size_t>(xs[1]);
  g.H = static_cast<std::size_t>(xs[2]);
  g.W = static_cast<std::size_t>(xs[3]);
  g.O = static_cast<std::size_t>(ws[0]);
  g.kh = static_cast<std::size_t>(ws[2]);
  g.kw = static_cast<std::size_t>(ws[3]);
  g.sh = stride_h;
  g.sw = stride_w;
  g.ph = pad_h;
  g.pw = pad_w;
  g.dh = g.dw = 1;
  g.Ho = out_extent(g.H, g.kh, stride_h, pad_h, 1);
  g.Wo = out_extent(g.W, g.kw, stride_w, pad_w, 1);
  return conv_general(x, weight, g);
}

Var conv1d(const Var& x, const Var& weight, int dilation, int pad) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 3 || ws.size() != 3 || xs[1] != ws[1]) {
    throw UsageError("conv1d: input " + shape_str(xs) + " does not match weight " + shape_str(ws));
  }
  if (dilation < 1 || pad < 0) throw UsageError("conv1d: invalid dilation or padding");
  Geometry g{};
  g.B = static_cast<std::size_t>(xs[0]);
  g.C = static_cast<std::size_t>(xs[1]);
  g.H = 1;
  g.W = static_cast<std::size_t>(xs[2]);
  g.O = static_cast<std::size_t>(ws[0]);
  g.kh = 1;
  g.kw = static_cast<std::size_t>(ws[2]);
  g.sh = g.sw = 1;
  g.ph = 0;
  g.pw = pad;
  g.dh = 1;
  g.dw = dilation;
  g.Ho = 1;
  g.Wo = out_extent(g.W, g.kw, 1, pad, dilation);
  Var x4 = reshape(x, {xs[0], xs[1], 1, xs[2]});
  Var w4 = reshape(weight, {ws[0], ws[1], 1, ws[2]});
  Var y = conv_general(x4, w4, g);
  return reshape(y, {xs[0], ws[0], static_cast<std::int64_t>(g.Wo)});
}

void set_num_threads(int n) { g_threads = std::max(1, n); }
int num_threads() { return g_threads.load(); }

}  // namespace veriforge::nn
