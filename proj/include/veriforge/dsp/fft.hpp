#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace veriforge::dsp {

/// Forward real-to-complex transform of fixed size, backed by an FFTW plan.
/// An instance owns its buffers, so use one instance per thread.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  RealFft(RealFft&& other) noexcept;
  RealFft& operator=(RealFft&& other) noexcept;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  /// Input shorter than size() is zero-padded.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  /// |X[k]|^2 for k = 0..n/2.
  void power(std::span<const double> in, std::span<double> out);

 private:
  void release();

  std::size_t n_ = 0;
  double* in_ = nullptr;
  void* out_ = nullptr;  // fftw_complex*
  void* plan_ = nullptr;  // fftw_plan
};

/// Full linear convolution, length a.size() + b.size() - 1, via zero-padded FFT.
std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b);

std::size_t next_pow2(std::size_t n);

}  // namespace veriforge::dsp
