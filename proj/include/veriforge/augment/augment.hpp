#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "veriforge/data/wav.hpp"
#include "veriforge/rng.hpp"

namespace veriforge::augment {

enum class NoiseCategory { kNoise = 0, kMusic = 1, kBabble = 2 };

NoiseCategory parse_category(const std::string& name);
std::string to_string(NoiseCategory c);

struct NoiseClip {
  std::string id;
  data::Waveform audio;
  double rms = 0.0;
};

/// Noise clips grouped by category. Every clip is non-silent.
class NoiseCorpus {
 public:
  /// Throws DataError if the clip is silent.
  void add(NoiseCategory category, std::string id, data::Waveform audio);

  const std::vector<NoiseClip>& clips(NoiseCategory category) const {
    return clips_[static_cast<std::size_t>(category)];
  }
  bool empty() const;
  std::size_t size() const;

 private:
  std::array<std::vector<NoiseClip>, 3> clips_;
};

/// Impulse responses; each has a nonzero peak.
class RirSet {
 public:
  void add(data::Waveform rir);
  const std::vector<data::Waveform>& filters() const { return filters_; }
  bool empty() const { return filters_.empty(); }

 private:
  std::vector<data::Waveform> filters_;
};

/// Manifest lines `clip_id category path`, category in {noise, music, babble}.
NoiseCorpus load_noise_corpus(const std::filesystem::path& manifest);
/// Manifest lines `rir_id room path`.
RirSet load_rir_set(const std::filesystem::path& manifest);

enum class Branch { kClean = 0, kNoise = 1, kMusic = 2, kBabble = 3, kRir = 4 };
inline constexpr std::size_t kBranchCount = 5;
std::string to_string(Branch b);

struct SnrRange {
  double lo_db = 0.0;
  double hi_db = 0.0;
};

/// One branch is drawn per call with these probabilities. Defaults follow the
/// usual Kaldi x-vector recipe ranges with a uniform branch choice.
struct AugmentPolicy {
  std::array<double, kBranchCount> branch_weights = {0.2, 0.2, 0.2, 0.2, 0.2};
  SnrRange noise_snr{0.0, 15.0};
  SnrRange music_snr{5.0, 15.0};
  SnrRange babble_snr{13.0, 20.0};
  int babble_min_clips = 3;
  int babble_max_clips = 7;

  /// Throws UsageError unless weights are nonnegative, sum to 1 and ranges are ordered.
  void validate() const;

  static AugmentPolicy clean_only();
  static AugmentPolicy only(Branch b);
};

double rms(std::span<const double> x);

/// g = (rms_signal / rms_noise) * 10^(-snr_db / 20).
double noise_gain(double signal_rms, double noise_rms, double snr_db);

/// Tiles a short clip or takes a random crop of a long one so the result has `length` samples.
data::Waveform fit_noise(const data::Waveform& noise, std::size_t length, Rng& rng);

/// signal + g * fitted(noise), with g set so the two addends are snr_db apart.
/// Throws DataError if the signal or the fitted noise is silent.
data::Waveform mix_noise(const data::Waveform& signal, const data::Waveform& noise, double snr_db,
                         Rng& rng);

/// Convolves with the peak-normalized rir, keeps signal.size() samples starting at
/// the rir's peak index, and rescales only if the result exceeds unit amplitude.
data::Waveform convolve_rir(const data::Waveform& signal, const data::Waveform& rir);

Branch sample_branch(const AugmentPolicy& policy, Rng& rng);

/// Zeroes the weights of branches whose clips or filters are missing and renormalizes.
/// Falls back to clean-only when nothing is available.
AugmentPolicy restrict_to_available(const AugmentPolicy& policy, const NoiseCorpus& corpus, const RirSet& rirs);

/// Draws one branch and applies it. Output length equals input length.
data::Waveform apply_policy(const data::Waveform& signal, const AugmentPolicy& policy,
                            const NoiseCorpus& corpus, const RirSet& rirs, Rng& rng,
                            Branch* chosen = nullptr);

}  // namespace veriforge::augment
