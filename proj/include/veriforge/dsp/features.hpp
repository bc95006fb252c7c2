#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "veriforge/data/wav.hpp"

namespace veriforge::dsp {

/// Row-major T x bins power spectrogram.
struct SpectrogramMatrix {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t n_fft = 0;
  std::vector<double> power;

  double at(std::size_t t, std::size_t k) const { return power[t * bins + k]; }
};

struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t bins = 0;
  std::size_t n_fft = 0;
  int sample_rate = 0;
  double f_min = 0.0;
  double f_max = 0.0;
  std::vector<double> weights;    // n_mels x bins, row-major
  std::vector<double> center_hz;  // filter centers

  double at(std::size_t m, std::size_t k) const { return weights[m * bins + k]; }
};

enum class FeatureKind { kLogMel, kMfcc };
enum class Normalization { kNone, kInstanceNorm, kMeanNorm };

/// Row-major T x D features. T is the number of frames.
struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::vector<double> values;
  FeatureKind kind = FeatureKind::kLogMel;
  Normalization normalization = Normalization::kNone;

  double& at(std::size_t t, std::size_t d) { return values[t * dims + d]; }
  double at(std::size_t t, std::size_t d) const { return values[t * dims + d]; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// y[0] = x[0], y[n] = x[n] - coeff * x[n-1].
data::Waveform pre_emphasis(const data::Waveform& w, double coeff);

/// Hamming window 0.54 - 0.46 cos(2 pi n / (W - 1)).
std::vector<double> hamming_window(std::size_t length);

/// Number of frames for an N-sample input: 1 + floor((N - win) / hop).
std::size_t frame_count(std::size_t n_samples, std::size_t win, std::size_t hop);

/// |FFT(hamming * frame)|^2 over bins 0..n_fft/2.
SpectrogramMatrix spectrogram(const data::Waveform& w, double win_ms, double hop_ms,
                              std::size_t n_fft);

/// Triangular filters with centers equally spaced on the mel scale.
MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate,
                             double f_min, double f_max);

/// log(fb * spec + eps) per frame.
FeatureMatrix logmel(const SpectrogramMatrix& spec, const MelFilterbank& fb, double eps = 1e-6);

/// Orthonormal DCT-II per frame, first n_coeff coefficients.
FeatureMatrix mfcc(const FeatureMatrix& logmel_features, std::size_t n_coeff);

/// Orthonormal DCT-II matrix (n_out x n_in), row-major.
std::vector<double> dct_matrix(std::size_t n_out, std::size_t n_in);

/// Inverse of the full orthonormal DCT-II (DCT-III), per frame.
FeatureMatrix inverse_dct(const FeatureMatrix& coefficients);

/// Per-dimension normalization over frames. Instance norm divides by (std + eps).
FeatureMatrix normalize(const FeatureMatrix& features, Normalization mode, double eps = 1e-5);

/// Everything needed to go from waveform to network input.
struct FrontendConfig {
  FeatureKind kind = FeatureKind::kLogMel;
  std::size_t n_mels = 64;
  std::size_t n_coeff = 80;  // MFCC only
  std::size_t n_fft = 512;
  double win_ms = 25.0;
  double hop_ms = 10.0;
  double pre_emphasis = 0.97;
  double f_min = 20.0;
  double f_max = 7600.0;
  double log_eps = 1e-6;
  double norm_eps = 1e-5;
  int sample_rate = data::kDefaultSampleRate;
  Normalization normalization = Normalization::kInstanceNorm;

  /// 64-band log-mel with instance norm (ResNet trunks).
  static FrontendConfig logmel64();
  /// 80 MFCCs from 80 mel bands with mean norm (TDNN trunk).
  static FrontendConfig mfcc80();

  std::size_t feature_dim() const { return kind == FeatureKind::kLogMel ? n_mels : n_coeff; }
};

/// Caches the filterbank and DCT so repeated extraction is cheap. Immutable
/// after construction, so one instance can serve several threads.
class Frontend {
 public:
  explicit Frontend(const FrontendConfig& cfg);

  FeatureMatrix operator()(const data::Waveform& w) const;
  const FrontendConfig& config() const { return cfg_; }
  const MelFilterbank& filterbank() const { return fb_; }

 private:
  FrontendConfig cfg_;
  MelFilterbank fb_;
};

/// Feature dump: u32 T, u32 D, then T*D float32, all little-endian.
void write_feature_dump(const std::filesystem::path& path, const FeatureMatrix& f);
FeatureMatrix read_feature_dump(const std::filesystem::path& path);

std::string to_string(FeatureKind kind);
std::string to_string(Normalization mode);

}  // namespace veriforge::dsp
