#include "veriforge/data/trials.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "text_lines.hpp"
#include "veriforge/error.hpp"

namespace veriforge::data {
namespace {

std::string slurp(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(DataError::Kind::kMissingFile,
                    std::string("cannot open ") + what + ": " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::kUnwritable, "cannot write " + path.string());
  out << text;
  if (!out) throw DataError(DataError::Kind::kUnwritable, "write failed: " + path.string());
}

}  // namespace

TrialList parse_trials_text(const std::string& text) {
  TrialList trials;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto f = detail::fields_of(line);
    if (f.empty()) continue;
    const std::string at = "trial line " + std::to_string(line_no);
    if (f.size() != 3) {
      throw DataError(DataError::Kind::kMalformedLine,
                      at + ": expected 3 fields, got " + std::to_string(f.size()));
    }
    if (f[0] != "0" && f[0] != "1") {
      throw DataError(DataError::Kind::kInvalidValue, at + ": label must be 0 or 1, got '" + f[0] + "'");
    }
    trials.push_back({f[0] == "1", f[1], f[2]});
  }
  return trials;
}

TrialList parse_trials(const std::filesystem::path& path) {
  return parse_trials_text(slurp(path, "trial list"));
}

std::string format_trials(const TrialList& trials) {
  std::string out;
  for (const auto& t : trials) {
    out += t.target ? "1 " : "0 ";
    out += t.enroll_id + ' ' + t.test_id + '\n';
  }
  return out;
}

void write_trials(const std::filesystem::path& path, const TrialList& trials) {
  spill(path, format_trials(trials));
}

ScoreSet parse_scores_text(const std::string& text) {
  ScoreSet scores;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto f = detail::fields_of(line);
    if (f.empty()) continue;
    const std::string at = "score line " + std::to_string(line_no);
    if (f.size() != 3) {
      throw DataError(DataError::Kind::kMalformedLine,
                      at + ": expected 3 fields, got " + std::to_string(f.size()));
    }
    double v = 0.0;
    try {
      std::size_t pos = 0;
      v = std::stod(f[2], &pos);
      if (pos != f[2].size()) throw std::invalid_argument(f[2]);
    } catch (const std::exception&) {
      throw DataError(DataError::Kind::kInvalidValue, at + ": bad score '" + f[2] + "'");
    }
    if (!std::isfinite(v)) throw DataError(DataError::Kind::kInvalidValue, at + ": non-finite score");
    scores.push_back({f[0], f[1], v});
  }
  return scores;
}

ScoreSet parse_scores(const std::filesystem::path& path) {
  return parse_scores_text(slurp(path, "score file"));
}

std::string format_scores(const ScoreSet& scores) {
  std::string out;
  char buf[64];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof buf, "%.9g", s.score);
    out += s.enroll_id + ' ' + s.test_id + ' ' + buf + '\n';
  }
  return out;
}

void write_scores(const std::filesystem::path& path, const ScoreSet& scores) {
  spill(path, format_scores(scores));
}

void check_alignment(const ScoreSet& scores, const TrialList& trials) {
  if (scores.size() != trials.size()) {
    throw DataError(DataError::Kind::kMismatch,
                    "score file has " + std::to_string(scores.size()) + " entries but trial list has " +
                        std::to_string(trials.size()));
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].enroll_id != trials[i].enroll_id || scores[i].test_id != trials[i].test_id) {
      throw DataError(DataError::Kind::kMismatch,
                      "score entry " + std::to_string(i + 1) + " (" + scores[i].enroll_id + ", " +
                          scores[i].test_id + ") does not match trial " + std::to_string(i + 1));
    }
  }
}

std::vector<double> score_values(const ScoreSet& scores) {
  std::vector<double> v;
  v.reserve(scores.size());
  for (const auto& s : scores) v.push_back(s.score);
  return v;
}

std::vector<bool> trial_labels(const TrialList& trials) {
  std::vector<bool> v;
  v.reserve(trials.size());
  for (const auto& t : trials) v.push_back(t.target);
  return v;
}

}  // namespace veriforge::data
