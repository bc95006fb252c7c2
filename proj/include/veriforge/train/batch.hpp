#pragma once

#include <map>
#include <string>
#include <vector>

#include "veriforge/augment/augment.hpp"
#include "veriforge/data/manifest.hpp"
#include "veriforge/data/wav.hpp"
#include "veriforge/dsp/features.hpp"
#include "veriforge/rng.hpp"

namespace veriforge::train {

enum class BatchMode { kClassification, kMetric };

struct BatchSpec {
  BatchMode mode = BatchMode::kClassification;
  /// Utterances per batch (classification) or speakers per batch (metric).
  int size = 64;
  double segment_s = 2.0;
  /// Metric mode: draw the two segments of a speaker from different utterances when
  /// the speaker has more than one; otherwise two crops of one utterance.
  bool distinct_utterances = true;

  void validate() const;
};

/// Training audio held in memory with integer speaker labels (order of first appearance).
class TrainingSet {
 public:
  explicit TrainingSet(std::vector<data::UtteranceRecord> records);

  std::size_t size() const { return records_.size(); }
  std::size_t n_speakers() const { return by_speaker_.size(); }
  const data::UtteranceRecord& record(std::size_t i) const { return records_[i]; }
  const data::Waveform& audio(std::size_t i) const { return audio_[i]; }
  int label(std::size_t i) const { return labels_[i]; }
  /// Utterance indices of speaker `label`.
  const std::vector<std::size_t>& utterances_of(int label) const { return by_speaker_[label]; }
  const std::vector<std::string>& speaker_names() const { return speakers_; }

 private:
  std::vector<data::UtteranceRecord> records_;
  std::vector<data::Waveform> audio_;
  std::vector<int> labels_;
  std::vector<std::string> speakers_;
  std::vector<std::vector<std::size_t>> by_speaker_;
};

/// Optional online augmentation.
struct AugmentSource {
  augment::AugmentPolicy policy;
  augment::NoiseCorpus noise;
  augment::RirSet rirs;
};

struct Batch {
  BatchMode mode = BatchMode::kClassification;
  /// Metric mode: the first half is the query set, the second half the support set,
  /// row i of each half from the same speaker.
  std::vector<dsp::FeatureMatrix> features;
  std::vector<int> labels;
  std::vector<std::size_t> utterances;
};

/// Crops, optionally augments and featurizes one segment per listed utterance.
/// Segment i draws from derive_rng(segment_seed, {i}), so `workers` does not change the result.
std::vector<dsp::FeatureMatrix> extract_segments(const TrainingSet& set, const std::vector<std::size_t>& utterances,
                                                 double segment_s, const dsp::Frontend& frontend,
                                                 const AugmentSource* augment, std::uint64_t segment_seed,
                                                 int workers);

/// Classification: `size` utterances drawn uniformly with replacement.
/// Metric: `size` distinct speakers, two segments each.
Batch sample_batch(const BatchSpec& spec, const TrainingSet& set, const dsp::Frontend& frontend,
                   const AugmentSource* augment, Rng& rng, int workers = 1);

/// Classification batch over the given utterances.
Batch classification_batch(const TrainingSet& set, const std::vector<std::size_t>& utterances, double segment_s,
                           const dsp::Frontend& frontend, const AugmentSource* augment, Rng& rng, int workers = 1);

}  // namespace veriforge::train
