#include "veriforge/train/batch.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "veriforge/error.hpp"

namespace veriforge::train {

void BatchSpec::validate() const {
  if (size < 2) throw UsageError("batch size must be >= 2");
  if (!(segment_s > 0.0)) throw UsageError("segment duration must be > 0");
}

TrainingSet::TrainingSet(std::vector<data::UtteranceRecord> records) : records_(std::move(records)) {
  std::map<std::string, int> index;
  for (const auto& r : records_) {
    auto [it, inserted] = index.emplace(r.speaker_id, static_cast<int>(speakers_.size()));
    if (inserted) {
      speakers_.push_back(r.speaker_id);
      by_speaker_.emplace_back();
    }
    labels_.push_back(it->second);
    by_speaker_[it->second].push_back(labels_.size() - 1);
    audio_.push_back(data::load_wav(r.path));
  }
}

std::vector<dsp::FeatureMatrix> extract_segments(const TrainingSet& set, const std::vector<std::size_t>& utterances,
                                                 double segment_s, const dsp::Frontend& frontend,
                                                 const AugmentSource* augment, std::uint64_t segment_seed,
                                                 int workers) {
  std::vector<dsp::FeatureMatrix> out(utterances.size());
  auto one = [&](std::size_t i) {
    Rng rng = derive_rng(segment_seed, {i});
    data::Waveform seg = data::sample_segment(set.audio(utterances[i]), segment_s, rng);
    if (augment) seg = augment::apply_policy(seg, augment->policy, augment->noise, augment->rirs, rng);
    out[i] = frontend(seg);
  };
  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), out.size());
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < out.size(); ++i) one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < out.size(); i = next++) {
        try {
          one(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

Batch classification_batch(const TrainingSet& set, const std::vector<std::size_t>& utterances, double segment_s,
                           const dsp::Frontend& frontend, const AugmentSource* augment, Rng& rng, int workers) {
  Batch b;
  b.mode = BatchMode::kClassification;
  b.utterances = utterances;
  for (auto u : utterances) b.labels.push_back(set.label(u));
  b.features = extract_segments(set, utterances, segment_s, frontend, augment, rng(), workers);
  return b;
}

Batch sample_batch(const BatchSpec& spec, const TrainingSet& set, const dsp::Frontend& frontend,
                   const AugmentSource* augment, Rng& rng, int workers) {
  spec.validate();
  if (set.size() == 0) throw DataError(DataError::Kind::kInvalidValue, "training manifest is empty");
  if (spec.mode == BatchMode::kClassification) {
    std::vector<std::size_t> picks(static_cast<std::size_t>(spec.size));
    for (auto& p : picks) p = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(set.size()) - 1));
    return classification_batch(set, picks, spec.segment_s, frontend, augment, rng, workers);
  }

  const auto n_spk = static_cast<int>(set.n_speakers());
  if (n_spk < 2 || spec.size > n_spk) {
    throw DataError(DataError::Kind::kInvalidValue, "metric batch of " + std::to_string(spec.size) +
                                                        " speakers needs at least that many speakers (have " +
                                                        std::to_string(n_spk) + ")");
  }
  std::vector<int> speakers(static_cast<std::size_t>(n_spk));
  std::iota(speakers.begin(), speakers.end(), 0);
  std::shuffle(speakers.begin(), speakers.end(), rng);
  speakers.resize(static_cast<std::size_t>(spec.size));

  Batch b;
  b.mode = BatchMode::kMetric;
  std::vector<std::size_t> query, support;
  for (int s : speakers) {
    const auto& utts = set.utterances_of(s);
    const auto n = static_cast<std::int64_t>(utts.size());
    const auto first = uniform_int(rng, 0, n - 1);
    auto second = first;
    if (spec.distinct_utterances && n > 1) {
      second = uniform_int(rng, 0, n - 2);
      if (second >= first) ++second;
    }
    query.push_back(utts[static_cast<std::size_t>(first)]);
    support.push_back(utts[static_cast<std::size_t>(second)]);
  }
  b.utterances = query;
  b.utterances.insert(b.utterances.end(), support.begin(), support.end());
  for (auto u : b.utterances) b.labels.push_back(set.label(u));
  b.features = extract_segments(set, b.utterances, spec.segment_s, frontend, augment, rng(), workers);
  return b;
}

}  // namespace veriforge::train
