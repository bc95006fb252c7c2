#include "veriforge/dsp/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

#include "veriforge/error.hpp"

namespace veriforge::dsp {
namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 2) throw UsageError("RealFft size must be at least 2");
  std::lock_guard<std::mutex> lock(planner_mutex());
  in_ = fftw_alloc_real(n_);
  out_ = fftw_alloc_complex(n_ / 2 + 1);
  plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), in_, static_cast<fftw_complex*>(out_),
                               FFTW_ESTIMATE);
}

RealFft::~RealFft() { release(); }

RealFft::RealFft(RealFft&& other) noexcept
    : n_(other.n_), in_(other.in_), out_(other.out_), plan_(other.plan_) {
  other.in_ = nullptr;
  other.out_ = nullptr;
  other.plan_ = nullptr;
}

RealFft& RealFft::operator=(RealFft&& other) noexcept {
  if (this != &other) {
    release();
    n_ = other.n_;
    in_ = other.in_;
    out_ = other.out_;
    plan_ = other.plan_;
    other.in_ = nullptr;
    other.out_ = nullptr;
    other.plan_ = nullptr;
  }
  return *this;
}

void RealFft::release() {
  if (!plan_ && !in_ && !out_) return;
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (plan_) fftw_destroy_plan(static_cast<fftw_plan>(plan_));
  if (in_) fftw_free(in_);
  if (out_) fftw_free(out_);
  plan_ = nullptr;
  in_ = nullptr;
  out_ = nullptr;
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() > n_ || out.size() < bins()) throw UsageError("RealFft: buffer size mismatch");
  std::copy(in.begin(), in.end(), in_);
  std::fill(in_ + in.size(), in_ + n_, 0.0);
  fftw_execute(static_cast<fftw_plan>(plan_));
  const auto* c = static_cast<const fftw_complex*>(out_);
  for (std::size_t k = 0; k < bins(); ++k) out[k] = {c[k][0], c[k][1]};
}

void RealFft::power(std::span<const double> in, std::span<double> out) {
  if (in.size() > n_ || out.size() < bins()) throw UsageError("RealFft: buffer size mismatch");
  std::copy(in.begin(), in.end(), in_);
  std::fill(in_ + in.size(), in_ + n_, 0.0);
  fftw_execute(static_cast<fftw_plan>(plan_));
  const auto* c = static_cast<const fftw_complex*>(out_);
  for (std::size_t k = 0; k < bins(); ++k) out[k] = c[k][0] * c[k][0] + c[k][1] * c[k][1];
}

std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t full = a.size() + b.size() - 1;
  const std::size_t n = next_pow2(full);
  const std::size_t bins = n / 2 + 1;

  double* buf = nullptr;
  fftw_complex* fa = nullptr;
  fftw_complex* fb = nullptr;
  fftw_plan fwd_a, fwd_b, inv;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    buf = fftw_alloc_real(n);
    fa = fftw_alloc_complex(bins);
    fb = fftw_alloc_complex(bins);
    fwd_a = fftw_plan_dft_r2c_1d(static_cast<int>(n), buf, fa, FFTW_ESTIMATE);
    fwd_b = fftw_plan_dft_r2c_1d(static_cast<int>(n), buf, fb, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), fa, buf, FFTW_ESTIMATE);
  }

  std::fill(buf, buf + n, 0.0);
  std::copy(a.begin(), a.end(), buf);
  fftw_execute(fwd_a);
  std::fill(buf, buf + n, 0.0);
  std::copy(b.begin(), b.end(), buf);
  fftw_execute(fwd_b);
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = fa[k][0] * fb[k][0] - fa[k][1] * fb[k][1];
    const double im = fa[k][0] * fb[k][1] + fa[k][1] * fb[k][0];
    fa[k][0] = re;
    fa[k][1] = im;
  }
  fftw_execute(inv);
  std::vector<double> out(buf, buf + full);
  const double scale = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= scale;

  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(fwd_a);
  fftw_destroy_plan(fwd_b);
  fftw_destroy_plan(inv);
  fftw_free(buf);
  fftw_free(fa);
  fftw_free(fb);
  return out;
}

}  // namespace veriforge::dsp
