#include "veriforge/augment/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "veriforge/data/manifest.hpp"
#include "veriforge/dsp/fft.hpp"
#include "veriforge/error.hpp"

namespace veriforge::augment {

NoiseCategory parse_category(const std::string& name) {
  if (name == "noise") return NoiseCategory::kNoise;
  if (name == "music") return NoiseCategory::kMusic;
  if (name == "babble" || name == "speech") return NoiseCategory::kBabble;
  throw DataError(DataError::Kind::kInvalidValue, "unknown noise category '" + name + "'");
}

std::string to_string(NoiseCategory c) {
  switch (c) {
    case NoiseCategory::kNoise: return "noise";
    case NoiseCategory::kMusic: return "music";
    case NoiseCategory::kBabble: return "babble";
  }
  return "noise";
}

std::string to_string(Branch b) {
  switch (b) {
    case Branch::kClean: return "clean";
    case Branch::kNoise: return "noise";
    case Branch::kMusic: return "music";
    case Branch::kBabble: return "babble";
    case Branch::kRir: return "rir";
  }
  return "clean";
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

void NoiseCorpus::add(NoiseCategory category, std::string id, data::Waveform audio) {
  const double r = rms(audio.samples);
  if (!(r > 0.0)) throw DataError(DataError::Kind::kInvalidValue, "noise clip '" + id + "' is silent");
  clips_[static_cast<std::size_t>(category)].push_back({std::move(id), std::move(audio), r});
}

bool NoiseCorpus::empty() const { return size() == 0; }

std::size_t NoiseCorpus::size() const {
  std::size_t n = 0;
  for (const auto& c : clips_) n += c.size();
  return n;
}

void RirSet::add(data::Waveform rir) {
  double peak = 0.0;
  for (double v : rir.samples) {
    if (!std::isfinite(v)) throw DataError(DataError::Kind::kInvalidValue, "non-finite RIR tap");
    peak = std::max(peak, std::abs(v));
  }
  if (!(peak > 0.0)) throw DataError(DataError::Kind::kInvalidValue, "all-zero RIR");
  filters_.push_back(std::move(rir));
}

NoiseCorpus load_noise_corpus(const std::filesystem::path& manifest) {
  NoiseCorpus corpus;
  for (const auto& r : data::parse_manifest(manifest)) {
    corpus.add(parse_category(r.speaker_id), r.utterance_id, data::load_wav(r.path));
  }
  return corpus;
}

RirSet load_rir_set(const std::filesystem::path& manifest) {
  RirSet set;
  for (const auto& r : data::parse_manifest(manifest)) set.add(data::load_wav(r.path));
  return set;
}

void AugmentPolicy::validate() const {
  double total = 0.0;
  for (double w : branch_weights) {
    if (!(w >= 0.0)) throw UsageError("augmentation branch weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("augmentation branch weights must sum to 1");
  for (const auto* r : {&noise_snr, &music_snr, &babble_snr}) {
    if (r->lo_db > r->hi_db) throw UsageError("SNR range has lo > hi");
  }
  if (babble_min_clips < 1 || babble_min_clips > babble_max_clips) {
    throw UsageError("babble clip range must satisfy 1 <= min <= max");
  }
}

AugmentPolicy AugmentPolicy::clean_only() { return only(Branch::kClean); }

AugmentPolicy AugmentPolicy::only(Branch b) {
  AugmentPolicy p;
  p.branch_weights.fill(0.0);
  p.branch_weights[static_cast<std::size_t>(b)] = 1.0;
  return p;
}

double noise_gain(double signal_rms, double noise_rms, double snr_db) {
  return (signal_rms / noise_rms) * std::pow(10.0, -snr_db / 20.0);
}

data::Waveform fit_noise(const data::Waveform& noise, std::size_t length, Rng& rng) {
  if (noise.samples.empty()) throw DataError(DataError::Kind::kEmptyAudio, "empty noise clip");
  if (noise.samples.size() <= length) return data::tile_to_length(noise, length);
  const auto start = static_cast<std::size_t>(
      uniform_int(rng, 0, static_cast<std::int64_t>(noise.samples.size() - length)));
  data::Waveform out;
  out.sample_rate = noise.sample_rate;
  out.samples.assign(noise.samples.begin() + static_cast<std::ptrdiff_t>(start),
                     noise.samples.begin() + static_cast<std::ptrdiff_t>(start + length));
  return out;
}

data::Waveform mix_noise(const data::Waveform& signal, const data::Waveform& noise, double snr_db,
                         Rng& rng) {
  const double s_rms = rms(signal.samples);
  if (!(s_rms > 0.0)) {
    throw DataError(DataError::Kind::kInvalidValue, "cannot mix noise into a silent signal: SNR undefined");
  }
  const auto fitted = fit_noise(noise, signal.samples.size(), rng);
  const double n_rms = rms(fitted.samples);
  if (!(n_rms > 0.0)) throw DataError(DataError::Kind::kInvalidValue, "noise segment is silent");
  const double g = noise_gain(s_rms, n_rms, snr_db);
  data::Waveform out = signal;
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += g * fitted.samples[i];
  return out;
}

data::Waveform convolve_rir(const data::Waveform& signal, const data::Waveform& rir) {
  std::size_t peak_idx = 0;
  double peak = 0.0;
  for (std::size_t i = 0; i < rir.samples.size(); ++i) {
    if (std::abs(rir.samples[i]) > peak) {
      peak = std::abs(rir.samples[i]);
      peak_idx = i;
    }
  }
  if (!(peak > 0.0)) throw DataError(DataError::Kind::kInvalidValue, "all-zero RIR");

  std::vector<double> h(rir.samples);
  for (auto& v : h) v /= peak;
  const auto full = dsp::fft_convolve(signal.samples, h);

  data::Waveform out;
  out.sample_rate = signal.sample_rate;
  out.samples.assign(full.begin() + static_cast<std::ptrdiff_t>(peak_idx),
                     full.begin() + static_cast<std::ptrdiff_t>(peak_idx + signal.samples.size()));
  double max_abs = 0.0;
  for (double v : out.samples) max_abs = std::max(max_abs, std::abs(v));
  if (max_abs > 1.0) {
    for (auto& v : out.samples) v /= max_abs;
  }
  return out;
}

Branch sample_branch(const AugmentPolicy& policy, Rng& rng) {
  const double u = uniform(rng, 0.0, 1.0);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < kBranchCount; ++i) {
    if (policy.branch_weights[i] <= 0.0) continue;
    last_positive = i;
    acc += policy.branch_weights[i];
    if (u < acc) return static_cast<Branch>(i);
  }
  return static_cast<Branch>(last_positive);
}

namespace {

const NoiseClip& pick_clip(const NoiseCorpus& corpus, NoiseCategory c, Rng& rng) {
  const auto& clips = corpus.clips(c);
  if (clips.empty()) {
    throw UsageError("augmentation policy selects '" + to_string(c) + "' but the corpus has no such clips");
  }
  return clips[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(clips.size()) - 1))];
}

}  // namespace

AugmentPolicy restrict_to_available(const AugmentPolicy& policy, const NoiseCorpus& corpus, const RirSet& rirs) {
  AugmentPolicy out = policy;
  auto& w = out.branch_weights;
  if (corpus.clips(NoiseCategory::kNoise).empty()) w[static_cast<std::size_t>(Branch::kNoise)] = 0.0;
  if (corpus.clips(NoiseCategory::kMusic).empty()) w[static_cast<std::size_t>(Branch::kMusic)] = 0.0;
  if (corpus.clips(NoiseCategory::kBabble).empty()) w[static_cast<std::size_t>(Branch::kBabble)] = 0.0;
  if (rirs.empty()) w[static_cast<std::size_t>(Branch::kRir)] = 0.0;
  double total = 0.0;
  for (double v : w) total += v;
  if (total <= 0.0) return AugmentPolicy::clean_only();
  for (double& v : w) v /= total;
  return out;
}

data::Waveform apply_policy(const data::Waveform& signal, const AugmentPolicy& policy,
                            const NoiseCorpus& corpus, const RirSet& rirs, Rng& rng,
                            Branch* chosen) {
  const Branch b = sample_branch(policy, rng);
  if (chosen) *chosen = b;
  switch (b) {
    case Branch::kClean:
      return signal;
    case Branch::kNoise: {
      const auto& clip = pick_clip(corpus, NoiseCategory::kNoise, rng);
      const double snr = uniform(rng, policy.noise_snr.lo_db, policy.noise_snr.hi_db);
      return mix_noise(signal, clip.audio, snr, rng);
    }
    case Branch::kMusic: {
      const auto& clip = pick_clip(corpus, NoiseCategory::kMusic, rng);
      const double snr = uniform(rng, policy.music_snr.lo_db, policy.music_snr.hi_db);
      return mix_noise(signal, clip.audio, snr, rng);
    }
    case Branch::kBabble: {
      const auto n = uniform_int(rng, policy.babble_min_clips, policy.babble_max_clips);
      data::Waveform sum;
      sum.sample_rate = signal.sample_rate;
      sum.samples.assign(signal.samples.size(), 0.0);
      for (std::int64_t i = 0; i < n; ++i) {
        const auto& clip = pick_clip(corpus, NoiseCategory::kBabble, rng);
        const auto part = fit_noise(clip.audio, signal.samples.size(), rng);
        for (std::size_t k = 0; k < sum.samples.size(); ++k) sum.samples[k] += part.samples[k];
      }
      const double snr = uniform(rng, policy.babble_snr.lo_db, policy.babble_snr.hi_db);
      return mix_noise(signal, sum, snr, rng);
    }
    case Branch::kRir: {
      if (rirs.empty()) throw UsageError("augmentation policy selects 'rir' but the RIR set is empty");
      const auto idx = uniform_int(rng, 0, static_cast<std::int64_t>(rirs.filters().size()) - 1);
      return convolve_rir(signal, rirs.filters()[static_cast<std::size_t>(idx)]);
    }
  }
  return signal;
}

}  // namespace veriforge::augment
