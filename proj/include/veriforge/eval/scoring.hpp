#pragma once

#include <atomic>
#include <filesystem>
#include <vector>

#include "veriforge/data/trials.hpp"
#include "veriforge/data/wav.hpp"
#include "veriforge/dsp/features.hpp"
#include "veriforge/nn/model.hpp"

namespace veriforge::eval {

inline constexpr int kTtaSegments = 10;
inline constexpr double kTtaSegmentSeconds = 4.0;

/// Sample offsets round(k * (L - seg) / (n - 1)) for k = 0..n-1.
std::vector<std::size_t> tta_offsets(std::size_t length, std::size_t segment, int n = kTtaSegments);

/// Tiles to at least segment_s, then cuts n evenly spaced segments.
std::vector<data::Waveform> tta_segments(const data::Waveform& w, int n = kTtaSegments,
                                         double segment_s = kTtaSegmentSeconds);

/// Maps a batch of equal-length segments to embeddings [n, E]. Must be safe to call
/// from several threads at once.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual nn::Tensor embed(const std::vector<data::Waveform>& segments) const = 0;
};

/// Eval-mode model behind a feature frontend.
class ModelEmbedder : public Embedder {
 public:
  ModelEmbedder(const nn::SpeakerModel& model, const dsp::FrontendConfig& frontend);
  nn::Tensor embed(const std::vector<data::Waveform>& segments) const override;

 private:
  const nn::SpeakerModel& model_;
  dsp::Frontend frontend_;
};

/// Mean cosine similarity over all row pairs of a [n, E] and b [m, E].
double mean_cosine(const nn::Tensor& a, const nn::Tensor& b);

/// Mean of the 10 x 10 cross-segment cosine similarities.
double score_pair(const Embedder& embedder, const data::Waveform& wa, const data::Waveform& wb);

struct ScoringStats {
  std::size_t embed_calls = 0;  // one per distinct utterance
};

/// Trial ids are paths relative to `audio_root`. Each distinct utterance is loaded and
/// embedded once; utterances are processed by up to `workers` threads.
data::ScoreSet score_trials(const Embedder& embedder, const data::TrialList& trials,
                            const std::filesystem::path& audio_root, int workers = 1,
                            ScoringStats* stats = nullptr);

}  // namespace veriforge::eval
