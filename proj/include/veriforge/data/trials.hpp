#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace veriforge::data {

struct Trial {
  bool target = false;
  std::string enroll_id;
  std::string test_id;

  bool operator==(const Trial&) const = default;
};

using TrialList = std::vector<Trial>;

/// VoxCeleb-style trial list: `label enroll test` with label in {0, 1}.
TrialList parse_trials(const std::filesystem::path& path);
TrialList parse_trials_text(const std::string& text);

void write_trials(const std::filesystem::path& path, const TrialList& trials);
std::string format_trials(const TrialList& trials);

struct ScoreEntry {
  std::string enroll_id;
  std::string test_id;
  double score = 0.0;
};

/// One entry per trial, in trial order.
using ScoreSet = std::vector<ScoreEntry>;

/// `enroll_id test_id score` lines.
ScoreSet parse_scores(const std::filesystem::path& path);
ScoreSet parse_scores_text(const std::string& text);

/// Scores are printed with 9 significant digits.
void write_scores(const std::filesystem::path& path, const ScoreSet& scores);
std::string format_scores(const ScoreSet& scores);

/// Throws DataError(kMismatch) unless `scores` covers `trials` entry by entry.
void check_alignment(const ScoreSet& scores, const TrialList& trials);

/// Plain score vector, for metric code.
std::vector<double> score_values(const ScoreSet& scores);
std::vector<bool> trial_labels(const TrialList& trials);

}  // namespace veriforge::data
