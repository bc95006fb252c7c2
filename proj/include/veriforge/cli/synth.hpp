#pragma once

#include <cstdint>
#include <filesystem>

namespace veriforge::cli {

struct SynthOptions {
  int n_speakers = 16;
  int n_utts = 10;     // training utterances per speaker
  int n_heldout = 4;   // held-out utterances per speaker, used only by the trial list
  std::uint64_t seed = 0;
  int sample_rate = 16000;
  double min_duration_s = 3.0;
  double max_duration_s = 6.0;
  double snr_db = 20.0;
};

struct SynthSummary {
  std::filesystem::path manifest;  // <out>/train.txt, paths under wav/
  std::filesystem::path trials;    // <out>/trials.txt, ids are paths under heldout/
  std::size_t n_train = 0;
  std::size_t n_heldout = 0;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
};

/// Each speaker is a seeded harmonic signature: three sinusoids plus a glottal-like
/// pulse train, shaped by two formant resonators. Utterances vary pitch slightly,
/// carry a syllable-rate envelope and white noise at `snr_db`.
SynthSummary synth_corpus(const std::filesystem::path& out_dir, const SynthOptions& opt);

}  // namespace veriforge::cli
