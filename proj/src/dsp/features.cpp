#include "veriforge/dsp/features.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "veriforge/dsp/fft.hpp"
#include "veriforge/error.hpp"

namespace veriforge::dsp {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

data::Waveform pre_emphasis(const data::Waveform& w, double coeff) {
  if (coeff < 0.0 || coeff >= 1.0) throw UsageError("pre-emphasis coefficient must be in [0, 1)");
  data::Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(w.samples.size());
  if (w.samples.empty()) return out;
  out.samples[0] = w.samples[0];
  for (std::size_t n = 1; n < w.samples.size(); ++n) {
    out.samples[n] = w.samples[n] - coeff * w.samples[n - 1];
  }
  return out;
}

std::vector<double> hamming_window(std::size_t length) {
  std::vector<double> w(length, 1.0);
  if (length < 2) return w;
  for (std::size_t n = 0; n < length; ++n) {
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                  static_cast<double>(length - 1));
  }
  return w;
}

std::size_t frame_count(std::size_t n_samples, std::size_t win, std::size_t hop) {
  if (n_samples < win) return 0;
  return 1 + (n_samples - win) / hop;
}

SpectrogramMatrix spectrogram(const data::Waveform& w, double win_ms, double hop_ms,
                              std::size_t n_fft) {
  const auto win = static_cast<std::size_t>(std::llround(win_ms * w.sample_rate / 1000.0));
  const auto hop = static_cast<std::size_t>(std::llround(hop_ms * w.sample_rate / 1000.0));
  if (win == 0 || hop == 0) throw UsageError("window and hop must span at least one sample");
  if (n_fft < win) throw UsageError("n_fft must be at least the window length");
  if (w.samples.size() < win) {
    throw DataError(DataError::Kind::kInvalidValue,
                    "waveform of " + std::to_string(w.samples.size()) +
                        " samples is shorter than one analysis window (" + std::to_string(win) + ")");
  }

  SpectrogramMatrix spec;
  spec.n_fft = n_fft;
  spec.bins = n_fft / 2 + 1;
  spec.frames = frame_count(w.samples.size(), win, hop);
  spec.power.resize(spec.frames * spec.bins);

  const auto window = hamming_window(win);
  RealFft fft(n_fft);
  std::vector<double> frame(win);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double* src = w.samples.data() + t * hop;
    for (std::size_t i = 0; i < win; ++i) frame[i] = src[i] * window[i];
    fft.power(frame, std::span<double>(spec.power.data() + t * spec.bins, spec.bins));
  }
  return spec;
}

MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate,
                             double f_min, double f_max) {
  if (n_mels < 1) throw UsageError("n_mels must be at least 1");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0)) {
    throw UsageError("invalid mel frequency range [" + std::to_string(f_min) + ", " +
                     std::to_string(f_max) + "] for sample rate " + std::to_string(sample_rate));
  }
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.n_fft = n_fft;
  fb.bins = n_fft / 2 + 1;
  fb.sample_rate = sample_rate;
  fb.f_min = f_min;
  fb.f_max = f_max;
  fb.weights.assign(n_mels * fb.bins, 0.0);

  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));
  }
  fb.center_hz.assign(edges.begin() + 1, edges.end() - 1);

  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    bool any = false;
    for (std::size_t k = 0; k < fb.bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double v = 0.0;
      if (f > left && f <= center) {
        v = (f - left) / (center - left);
      } else if (f > center && f < right) {
        v = (right - f) / (right - center);
      }
      fb.weights[m * fb.bins + k] = v;
      any = any || v > 0.0;
    }
    if (!any) {
      throw UsageError("mel filter " + std::to_string(m) +
                       " covers no FFT bin; use a larger n_fft or fewer bands");
    }
  }
  return fb;
}

FeatureMatrix logmel(const SpectrogramMatrix& spec, const MelFilterbank& fb, double eps) {
  if (spec.bins != fb.bins || spec.n_fft != fb.n_fft) {
    throw UsageError("filterbank built for n_fft " + std::to_string(fb.n_fft) +
                     " applied to spectrogram with n_fft " + std::to_string(spec.n_fft));
  }
  FeatureMatrix out;
  out.frames = spec.frames;
  out.dims = fb.n_mels;
  out.kind = FeatureKind::kLogMel;
  out.values.resize(out.frames * out.dims);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double* p = spec.power.data() + t * spec.bins;
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
      const double* wrow = fb.weights.data() + m * fb.bins;
      double e = 0.0;
      for (std::size_t k = 0; k < fb.bins; ++k) e += wrow[k] * p[k];
      out.values[t * out.dims + m] = std::log(e + eps);
    }
  }
  return out;
}

std::vector<double> dct_matrix(std::size_t n_out, std::size_t n_in) {
  std::vector<double> m(n_out * n_in);
  const double n = static_cast<double>(n_in);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t i = 0; i < n_in; ++i) {
      m[k * n_in + i] = s * std::cos(std::numbers::pi * static_cast<double>(k) *
                                     (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
    }
  }
  return m;
}

namespace {

FeatureMatrix apply_rows(const FeatureMatrix& in, const std::vector<double>& mat, std::size_t n_out,
                         bool transpose) {
  FeatureMatrix out;
  out.frames = in.frames;
  out.dims = n_out;
  out.values.assign(in.frames * n_out, 0.0);
  const std::size_t n_in = in.dims;
  for (std::size_t t = 0; t < in.frames; ++t) {
    const double* x = in.values.data() + t * n_in;
    for (std::size_t k = 0; k < n_out; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n_in; ++i) {
        acc += (transpose ? mat[i * n_out + k] : mat[k * n_in + i]) * x[i];
      }
      out.values[t * n_out + k] = acc;
    }
  }
  return out;
}

}  // namespace

FeatureMatrix mfcc(const FeatureMatrix& logmel_features, std::size_t n_coeff) {
  if (n_coeff > logmel_features.dims) {
    throw UsageError("cannot take " + std::to_string(n_coeff) + " cepstral coefficients from " +
                     std::to_string(logmel_features.dims) + " mel bands");
  }
  auto out = apply_rows(logmel_features, dct_matrix(n_coeff, logmel_features.dims), n_coeff, false);
  out.kind = FeatureKind::kMfcc;
  return out;
}

FeatureMatrix inverse_dct(const FeatureMatrix& coefficients) {
  const std::size_t n = coefficients.dims;
  auto out = apply_rows(coefficients, dct_matrix(n, n), n, true);
  out.kind = FeatureKind::kLogMel;
  return out;
}

FeatureMatrix normalize(const FeatureMatrix& features, Normalization mode, double eps) {
  FeatureMatrix out = features;
  out.normalization = mode;
  if (mode == Normalization::kNone || features.frames == 0) return out;
  const std::size_t T = features.frames, D = features.dims;
  for (std::size_t d = 0; d < D; ++d) {
    double mean = 0.0;
    for (std::size_t t = 0; t < T; ++t) mean += features.at(t, d);
    mean /= static_cast<double>(T);
    double denom = 1.0;
    if (mode == Normalization::kInstanceNorm) {
      double var = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double c = features.at(t, d) - mean;
        var += c * c;
      }
      denom = std::sqrt(var / static_cast<double>(T)) + eps;
    }
    for (std::size_t t = 0; t < T; ++t) out.at(t, d) = (features.at(t, d) - mean) / denom;
  }
  return out;
}

FrontendConfig FrontendConfig::logmel64() { return FrontendConfig{}; }

FrontendConfig FrontendConfig::mfcc80() {
  FrontendConfig c;
  c.kind = FeatureKind::kMfcc;
  c.n_mels = 80;
  c.n_coeff = 80;
  c.normalization = Normalization::kMeanNorm;
  return c;
}

Frontend::Frontend(const FrontendConfig& cfg)
    : cfg_(cfg), fb_(mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate, cfg.f_min, cfg.f_max)) {
  if (cfg.kind == FeatureKind::kMfcc && cfg.n_coeff > cfg.n_mels) {
    throw UsageError("n_coeff exceeds n_mels");
  }
}

FeatureMatrix Frontend::operator()(const data::Waveform& w) const {
  if (w.sample_rate != cfg_.sample_rate) {
    throw DataError(DataError::Kind::kMismatch,
                    "audio sample rate " + std::to_string(w.sample_rate) +
                        " Hz does not match configured " + std::to_string(cfg_.sample_rate) + " Hz");
  }
  const auto spec = spectrogram(pre_emphasis(w, cfg_.pre_emphasis), cfg_.win_ms, cfg_.hop_ms, cfg_.n_fft);
  auto feats = logmel(spec, fb_, cfg_.log_eps);
  if (cfg_.kind == FeatureKind::kMfcc) feats = mfcc(feats, cfg_.n_coeff);
  return normalize(feats, cfg_.normalization, cfg_.norm_eps);
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4] = {};
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_feature_dump(const std::filesystem::path& path, const FeatureMatrix& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(DataError::Kind::kUnwritable, "cannot write " + path.string());
  put_u32(out, static_cast<std::uint32_t>(f.frames));
  put_u32(out, static_cast<std::uint32_t>(f.dims));
  for (double v : f.values) {
    const float x = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    put_u32(out, bits);
  }
  if (!out) throw DataError(DataError::Kind::kUnwritable, "write failed: " + path.string());
}

FeatureMatrix read_feature_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::kMissingFile, "cannot open " + path.string());
  FeatureMatrix f;
  f.frames = get_u32(in);
  f.dims = get_u32(in);
  if (!in) throw DataError(DataError::Kind::kMalformedHeader, "truncated feature dump header");
  f.values.resize(f.frames * f.dims);
  for (auto& v : f.values) {
    const std::uint32_t bits = get_u32(in);
    float x;
    std::memcpy(&x, &bits, sizeof x);
    v = x;
  }
  if (!in) throw DataError(DataError::Kind::kMalformedHeader, "truncated feature dump body");
  return f;
}

std::string to_string(FeatureKind kind) { return kind == FeatureKind::kLogMel ? "logmel" : "mfcc"; }

std::string to_string(Normalization mode) {
  switch (mode) {
    case Normalization::kNone: return "none";
    case Normalization::kInstanceNorm: return "instance_norm";
    case Normalization::kMeanNorm: return "mean_norm";
  }
  return "none";
}

}  // namespace veriforge::dsp
