#include "veriforge/eval/scoring.hpp"

#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "veriforge/error.hpp"

namespace veriforge::eval {

std::vector<std::size_t> tta_offsets(std::size_t length, std::size_t segment, int n) {
  if (n < 1) throw UsageError("need at least one TTA segment");
  if (length < segment) throw UsageError("waveform shorter than the TTA segment");
  std::vector<std::size_t> out;
  const double span = static_cast<double>(length - segment);
  for (int k = 0; k < n; ++k) {
    out.push_back(n == 1 ? 0 : static_cast<std::size_t>(std::llround(k * span / (n - 1))));
  }
  return out;
}

std::vector<data::Waveform> tta_segments(const data::Waveform& w, int n, double segment_s) {
  const std::size_t seg = data::samples_for(segment_s, w.sample_rate);
  const data::Waveform src = w.size() < seg ? data::tile_to_length(w, seg) : w;
  std::vector<data::Waveform> out;
  for (auto off : tta_offsets(src.size(), seg, n)) {
    data::Waveform s;
    s.sample_rate = w.sample_rate;
    s.samples.assign(src.samples.begin() + static_cast<std::ptrdiff_t>(off),
                     src.samples.begin() + static_cast<std::ptrdiff_t>(off + seg));
    out.push_back(std::move(s));
  }
  return out;
}

ModelEmbedder::ModelEmbedder(const nn::SpeakerModel& model, const dsp::FrontendConfig& frontend)
    : model_(model), frontend_(frontend) {}

nn::Tensor ModelEmbedder::embed(const std::vector<data::Waveform>& segments) const {
  std::vector<dsp::FeatureMatrix> feats;
  feats.reserve(segments.size());
  for (const auto& s : segments) feats.push_back(frontend_(s));
  return model_.embed_batch(feats);
}

double mean_cosine(const nn::Tensor& a, const nn::Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw UsageError("embedding shapes " + nn::shape_str(a.shape()) + " and " + nn::shape_str(b.shape()) + " differ");
  }
  const auto E = static_cast<std::size_t>(a.dim(1));
  auto normalized = [E](const nn::Tensor& t) {
    std::vector<double> out(t.storage());
    for (std::size_t r = 0; r < out.size() / E; ++r) {
      double ss = 0.0;
      for (std::size_t j = 0; j < E; ++j) ss += out[r * E + j] * out[r * E + j];
      const double inv = 1.0 / std::sqrt(ss + 1e-8);
      for (std::size_t j = 0; j < E; ++j) out[r * E + j] *= inv;
    }
    return out;
  };
  const auto na = normalized(a);
  const auto nb = normalized(b);
  const std::size_t ra = na.size() / E, rb = nb.size() / E;
  double total = 0.0;
  for (std::size_t i = 0; i < ra; ++i)
    for (std::size_t k = 0; k < rb; ++k) {
      double dot = 0.0;
      for (std::size_t j = 0; j < E; ++j) dot += na[i * E + j] * nb[k * E + j];
      total += dot;
    }
  return total / static_cast<double>(ra * rb);
}

double score_pair(const Embedder& embedder, const data::Waveform& wa, const data::Waveform& wb) {
  return mean_cosine(embedder.embed(tta_segments(wa)), embedder.embed(tta_segments(wb)));
}

data::ScoreSet score_trials(const Embedder& embedder, const data::TrialList& trials,
                            const std::filesystem::path& audio_root, int workers, ScoringStats* stats) {
  // Distinct utterances in order of first appearance, with the first trial line naming each.
  std::map<std::string, std::size_t> slot;
  std::vector<std::string> ids;
  std::vector<std::size_t> first_line;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    for (const auto* id : {&trials[i].enroll_id, &trials[i].test_id}) {
      if (slot.emplace(*id, ids.size()).second) {
        ids.push_back(*id);
        first_line.push_back(i + 1);
      }
    }
  }

  std::vector<nn::Tensor> cache(ids.size());
  std::atomic<std::size_t> next{0}, calls{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    for (std::size_t u = next++; u < ids.size(); u = next++) {
      try {
        const auto path = audio_root / ids[u];
        if (!std::filesystem::exists(path)) {
          throw DataError(DataError::Kind::kMissingFile, "trial line " + std::to_string(first_line[u]) +
                                                             ": cannot open audio " + path.string());
        }
        cache[u] = embedder.embed(tta_segments(data::load_wav(path)));
        ++calls;
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(ids.size())));
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  if (stats) stats->embed_calls = calls.load();

  data::ScoreSet out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    out.push_back({t.enroll_id, t.test_id, mean_cosine(cache[slot.at(t.enroll_id)], cache[slot.at(t.test_id)])});
  }
  return out;
}

}  // namespace veriforge::eval
