#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "test_util.hpp"
#include "veriforge/dsp/features.hpp"
#include "veriforge/dsp/fft.hpp"
#include "veriforge/error.hpp"

using namespace veriforge;
using namespace veriforge::dsp;
using data::Waveform;

namespace {

constexpr double kPi = std::numbers::pi;

Waveform wave_of(std::vector<double> x) {
  Waveform w;
  w.samples = std::move(x);
  return w;
}

// Naive DFT power, O(n^2).
std::vector<double> dft_power(const std::vector<double>& x, std::size_t n_fft) {
  std::vector<double> out(n_fft / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0;
    for (std::size_t n = 0; n < x.size() && n < n_fft; ++n) {
      acc += x[n] * std::polar(1.0, -2 * kPi * static_cast<double>(k * n) / static_cast<double>(n_fft));
    }
    out[k] = std::norm(acc);
  }
  return out;
}

// Naive orthonormal DCT-II.
std::vector<double> naive_dct(const std::vector<double>& x, std::size_t n_out) {
  const double n = static_cast<double>(x.size());
  std::vector<double> y(n_out);
  for (std::size_t k = 0; k < n_out; ++k) {
    double acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * std::cos(kPi / n * (i + 0.5) * k);
    y[k] = acc * (k == 0 ? std::sqrt(1 / n) : std::sqrt(2 / n));
  }
  return y;
}

double high_band_fraction(const std::vector<double>& x) {
  const auto p = dft_power(x, x.size());
  double lo = 0, hi = 0;
  for (std::size_t k = 0; k < p.size(); ++k) (k >= p.size() / 2 ? hi : lo) += p[k];
  return hi / (lo + hi);
}

}  // namespace

TEST(PreEmphasis, ConstantInput) {
  const auto y = pre_emphasis(wave_of({1, 1, 1}), 0.97);
  ASSERT_EQ(y.size(), 3u);
  EXPECT_DOUBLE_EQ(y.samples[0], 1.0);
  EXPECT_NEAR(y.samples[1], 0.03, 1e-15);
  EXPECT_NEAR(y.samples[2], 0.03, 1e-15);
}

TEST(PreEmphasis, ZeroCoefficientIsIdentity) {
  Rng rng(1);
  const auto x = vf_test::random_vector(100, rng);
  EXPECT_EQ(pre_emphasis(wave_of(x), 0.0).samples, x);
}

TEST(PreEmphasis, ShiftsEnergyTowardHighFrequencies) {
  Rng rng(42);
  const auto x = vf_test::random_vector(1024, rng);
  const auto y = pre_emphasis(wave_of(x), 0.97).samples;
  const double before = high_band_fraction(x);
  const double after = high_band_fraction(y);
  EXPECT_GT(after, before);
  EXPECT_GT(after, 0.75);
}

TEST(PreEmphasis, RejectsCoefficientOutOfRange) {
  EXPECT_THROW(pre_emphasis(wave_of({1, 2}), 1.0), UsageError);
  EXPECT_THROW(pre_emphasis(wave_of({1, 2}), -0.1), UsageError);
}

TEST(Spectrogram, FrameCountForTwoSeconds) {
  EXPECT_EQ(frame_count(32000, 400, 160), 198u);
  Waveform w;
  w.samples.assign(32000, 0.0);
  const auto s = spectrogram(w, 25, 10, 512);
  EXPECT_EQ(s.frames, 198u);
  EXPECT_EQ(s.bins, 257u);
}

TEST(Spectrogram, ZeroSignalGivesZeros) {
  Waveform w;
  w.samples.assign(4000, 0.0);
  const auto s = spectrogram(w, 25, 10, 512);
  EXPECT_TRUE(std::all_of(s.power.begin(), s.power.end(), [](double v) { return v == 0.0; }));
}

TEST(Spectrogram, SinePeaksAtBin32) {
  Waveform w;
  w.samples.resize(16000);
  for (std::size_t n = 0; n < w.size(); ++n) w.samples[n] = std::sin(2 * kPi * 1000.0 * n / 16000.0);
  const auto s = spectrogram(w, 25, 10, 512);
  for (std::size_t t = 0; t < s.frames; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.bins; ++k) {
      if (s.at(t, k) > s.at(t, best)) best = k;
    }
    ASSERT_EQ(best, 32u) << "frame " << t;
  }
}

TEST(Spectrogram, MatchesNaiveDft) {
  Rng rng(7);
  const auto x = vf_test::random_vector(1200, rng);
  const auto s = spectrogram(wave_of(x), 25, 10, 512);
  const auto win = hamming_window(400);
  for (std::size_t t = 0; t < s.frames; ++t) {
    std::vector<double> frame(400);
    for (std::size_t n = 0; n < 400; ++n) frame[n] = x[t * 160 + n] * win[n];
    const auto ref = dft_power(frame, 512);
    for (std::size_t k = 0; k < s.bins; ++k) ASSERT_NEAR(s.at(t, k), ref[k], 1e-9 * (1 + ref[k]));
  }
}

TEST(Spectrogram, SignFlipInvariant) {
  Rng rng(8);
  auto x = vf_test::random_vector(2000, rng);
  const auto a = spectrogram(wave_of(x), 25, 10, 512);
  for (auto& v : x) v = -v;
  const auto b = spectrogram(wave_of(x), 25, 10, 512);
  EXPECT_EQ(a.power, b.power);
}

TEST(Spectrogram, ShortInputAndSmallFftAreErrors) {
  Waveform w;
  w.samples.assign(399, 0.1);
  EXPECT_ANY_THROW(spectrogram(w, 25, 10, 512));
  w.samples.assign(1000, 0.1);
  EXPECT_THROW(spectrogram(w, 25, 10, 256), UsageError);
}

TEST(Hamming, Endpoints) {
  const auto h = hamming_window(400);
  EXPECT_NEAR(h.front(), 0.08, 1e-12);
  EXPECT_NEAR(h.back(), 0.08, 1e-12);
}

TEST(MelFilterbank, SixtyFourTriangularRows) {
  const auto fb = mel_filterbank(64, 512, 16000, 20, 7600);
  ASSERT_EQ(fb.n_mels, 64u);
  ASSERT_EQ(fb.bins, 257u);
  for (std::size_t m = 0; m < fb.n_mels; ++m) {
    double peak = 0;
    std::size_t k_peak = 0;
    for (std::size_t k = 0; k < fb.bins; ++k) {
      ASSERT_GE(fb.at(m, k), 0.0);
      if (fb.at(m, k) > peak) peak = fb.at(m, k), k_peak = k;
    }
    ASSERT_GT(peak, 0.0) << "row " << m;
    for (std::size_t k = 1; k <= k_peak; ++k) ASSERT_GE(fb.at(m, k), fb.at(m, k - 1));
    for (std::size_t k = k_peak + 1; k < fb.bins; ++k) ASSERT_LE(fb.at(m, k), fb.at(m, k - 1));
    if (m > 0) ASSERT_GT(fb.center_hz[m], fb.center_hz[m - 1]);
  }
}

TEST(MelFilterbank, EightyBandsAllPositive) {
  const auto fb = mel_filterbank(80, 512, 16000, 20, 7600);
  for (std::size_t m = 0; m < 80; ++m) {
    double sum = 0;
    for (std::size_t k = 0; k < fb.bins; ++k) sum += fb.at(m, k);
    EXPECT_GT(sum, 0.0) << m;
  }
}

TEST(MelFilterbank, RejectsBadRange) {
  EXPECT_ANY_THROW(mel_filterbank(64, 512, 16000, 100, 50));
  EXPECT_ANY_THROW(mel_filterbank(64, 512, 16000, 0, 9000));
  EXPECT_ANY_THROW(mel_filterbank(0, 512, 16000, 0, 8000));
}

TEST(MelScale, RoundTrip) {
  for (double f : {0.0, 20.0, 700.0, 1000.0, 7600.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(f)), f, 1e-9);
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-12);
}

namespace {

SpectrogramMatrix random_spec(std::size_t frames, Rng& rng, double lo = 0.0, double hi = 10.0) {
  SpectrogramMatrix s;
  s.frames = frames;
  s.bins = 257;
  s.n_fft = 512;
  s.power = vf_test::random_vector(frames * 257, rng, lo, hi);
  return s;
}

}  // namespace

TEST(LogMel, ZeroSpectrumGivesLogEps) {
  SpectrogramMatrix s;
  s.frames = 3;
  s.bins = 257;
  s.n_fft = 512;
  s.power.assign(3 * 257, 0.0);
  const auto f = logmel(s, mel_filterbank(64, 512, 16000, 20, 7600));
  for (double v : f.values) EXPECT_DOUBLE_EQ(v, std::log(1e-6));
}

TEST(LogMel, DoublingAddsLogTwo) {
  Rng rng(3);
  auto s = random_spec(5, rng, 1.0, 10.0);
  const auto fb = mel_filterbank(64, 512, 16000, 20, 7600);
  const auto a = logmel(s, fb);
  for (auto& v : s.power) v *= 2;
  const auto b = logmel(s, fb);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(b.values[i] - a.values[i], std::log(2.0), 1e-4);
}

TEST(LogMel, ImpulseSpectrumMatchesFilterColumn) {
  SpectrogramMatrix s;
  s.frames = 1;
  s.bins = 257;
  s.n_fft = 512;
  s.power.assign(257, 0.0);
  s.power[40] = 3.0;
  const auto fb = mel_filterbank(64, 512, 16000, 20, 7600);
  const auto f = logmel(s, fb);
  for (std::size_t m = 0; m < 64; ++m) EXPECT_NEAR(f.at(0, m), std::log(3.0 * fb.at(m, 40) + 1e-6), 1e-12);
}

TEST(LogMel, MonotoneInSpectrum) {
  Rng rng(4);
  auto s = random_spec(4, rng);
  const auto fb = mel_filterbank(64, 512, 16000, 20, 7600);
  const auto a = logmel(s, fb);
  for (auto& v : s.power) v += uniform(rng, 0.0, 1.0);
  const auto b = logmel(s, fb);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_GE(b.values[i], a.values[i]);
}

TEST(LogMel, MismatchedFftIsError) {
  Rng rng(5);
  const auto s = random_spec(2, rng);
  EXPECT_ANY_THROW(logmel(s, mel_filterbank(64, 1024, 16000, 20, 7600)));
}

namespace {

FeatureMatrix random_features(std::size_t frames, std::size_t dims, Rng& rng) {
  FeatureMatrix f;
  f.frames = frames;
  f.dims = dims;
  f.values = vf_test::random_vector(frames * dims, rng, -5, 5);
  return f;
}

}  // namespace

TEST(Mfcc, ConstantVector) {
  FeatureMatrix f;
  f.frames = 1;
  f.dims = 80;
  f.values.assign(80, 1.7);
  const auto c = mfcc(f, 80);
  EXPECT_NEAR(c.at(0, 0), 1.7 * std::sqrt(80.0), 1e-12);
  for (std::size_t k = 1; k < 80; ++k) EXPECT_NEAR(c.at(0, k), 0.0, 1e-12);
}

TEST(Mfcc, MatchesNaiveDct) {
  Rng rng(12);
  const auto f = random_features(6, 80, rng);
  const auto c = mfcc(f, 40);
  ASSERT_EQ(c.dims, 40u);
  for (std::size_t t = 0; t < f.frames; ++t) {
    const std::vector<double> row(f.values.begin() + t * 80, f.values.begin() + (t + 1) * 80);
    const auto ref = naive_dct(row, 40);
    for (std::size_t k = 0; k < 40; ++k) ASSERT_NEAR(c.at(t, k), ref[k], 1e-10);
  }
}

TEST(Mfcc, InverseRecoversInputAndPreservesNorm) {
  Rng rng(13);
  const auto f = random_features(10, 80, rng);
  const auto c = mfcc(f, 80);
  const auto back = inverse_dct(c);
  for (std::size_t i = 0; i < f.values.size(); ++i) ASSERT_NEAR(back.values[i], f.values[i], 1e-6);
  for (std::size_t t = 0; t < f.frames; ++t) {
    double a = 0, b = 0;
    for (std::size_t d = 0; d < 80; ++d) a += f.at(t, d) * f.at(t, d), b += c.at(t, d) * c.at(t, d);
    EXPECT_NEAR(std::sqrt(a), std::sqrt(b), 1e-6);
  }
}

TEST(Mfcc, TooManyCoefficientsIsError) {
  Rng rng(1);
  EXPECT_ANY_THROW(mfcc(random_features(2, 64, rng), 80));
}

TEST(Normalize, InstanceNormStatistics) {
  Rng rng(21);
  auto f = random_features(200, 8, rng);
  for (std::size_t t = 0; t < f.frames; ++t) f.at(t, 3) = 3 * f.at(t, 3) + 7;
  const auto n = normalize(f, Normalization::kInstanceNorm);
  for (std::size_t d = 0; d < 8; ++d) {
    double mean = 0, sq = 0;
    for (std::size_t t = 0; t < n.frames; ++t) mean += n.at(t, d);
    mean /= n.frames;
    for (std::size_t t = 0; t < n.frames; ++t) sq += (n.at(t, d) - mean) * (n.at(t, d) - mean);
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(std::sqrt(sq / n.frames), 1.0, 1e-3);
  }
}

TEST(Normalize, MeanNormKeepsVariance) {
  Rng rng(22);
  const auto f = random_features(50, 4, rng);
  const auto n = normalize(f, Normalization::kMeanNorm);
  for (std::size_t d = 0; d < 4; ++d) {
    double ma = 0, mb = 0;
    for (std::size_t t = 0; t < 50; ++t) ma += f.at(t, d), mb += n.at(t, d);
    ma /= 50;
    mb /= 50;
    double va = 0, vb = 0;
    for (std::size_t t = 0; t < 50; ++t) {
      va += (f.at(t, d) - ma) * (f.at(t, d) - ma);
      vb += (n.at(t, d) - mb) * (n.at(t, d) - mb);
    }
    EXPECT_NEAR(va, vb, 1e-9);
    EXPECT_NEAR(mb, 0.0, 1e-12);
  }
}

TEST(Normalize, ConstantAndSingleFrameGiveZeros) {
  FeatureMatrix f;
  f.frames = 30;
  f.dims = 5;
  f.values.assign(150, 2.5);
  for (double v : normalize(f, Normalization::kInstanceNorm).values) EXPECT_EQ(v, 0.0);
  Rng rng(2);
  for (double v : normalize(random_features(1, 5, rng), Normalization::kInstanceNorm).values) EXPECT_EQ(v, 0.0);
}

TEST(Frontend, DimensionsAndDeterminism) {
  Rng rng(30);
  const auto w = wave_of(vf_test::random_vector(32000, rng, -0.5, 0.5));
  const Frontend lm(FrontendConfig::logmel64());
  const Frontend mf(FrontendConfig::mfcc80());
  const auto a = lm(w);
  EXPECT_EQ(a.frames, 198u);
  EXPECT_EQ(a.dims, 64u);
  EXPECT_EQ(mf(w).dims, 80u);
  EXPECT_EQ(lm(w).values, a.values);
  for (double v : a.values) ASSERT_TRUE(std::isfinite(v));
}

TEST(Frontend, FeatureDumpRoundTrip) {
  vf_test::TempDir dir;
  Rng rng(31);
  auto f = random_features(7, 3, rng);
  for (auto& v : f.values) v = static_cast<float>(v);
  write_feature_dump(dir / "f.bin", f);
  const auto r = read_feature_dump(dir / "f.bin");
  EXPECT_EQ(r.frames, 7u);
  EXPECT_EQ(r.dims, 3u);
  EXPECT_EQ(r.values, f.values);
  EXPECT_EQ(std::filesystem::file_size(dir / "f.bin"), 8u + 21u * 4u);
}

TEST(Fft, ConvolveMatchesDirect) {
  Rng rng(40);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = vf_test::random_vector(static_cast<std::size_t>(uniform_int(rng, 1, 300)), rng);
    const auto b = vf_test::random_vector(static_cast<std::size_t>(uniform_int(rng, 1, 50)), rng);
    const auto c = fft_convolve(a, b);
    ASSERT_EQ(c.size(), a.size() + b.size() - 1);
    for (std::size_t n = 0; n < c.size(); ++n) {
      double ref = 0;
      for (std::size_t k = 0; k < b.size(); ++k) {
        if (n >= k && n - k < a.size()) ref += a[n - k] * b[k];
      }
      ASSERT_NEAR(c[n], ref, 1e-10);
    }
  }
}
