#include "veriforge/fusion/fusion.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "veriforge/error.hpp"

namespace veriforge::fusion {

Objective parse_objective(const std::string& s) {
  if (s == "eer" || s == "EER") return Objective::kEer;
  if (s == "mindcf" || s == "MinDCF") return Objective::kMinDcf;
  throw UsageError("unknown fusion objective '" + s + "' (expected eer or mindcf)");
}

std::string to_string(Objective o) { return o == Objective::kEer ? "eer" : "mindcf"; }

FusionWeights parse_weights(const std::string& text) {
  FusionWeights w;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    int v = -1;
    try {
      v = std::stoi(item, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != item.size() || v < 0 || v > kMaxWeight) {
      throw UsageError("fusion weight '" + item + "' is not an integer in [0, " + std::to_string(kMaxWeight) + "]");
    }
    w.push_back(v);
  }
  if (w.empty()) throw UsageError("empty fusion weight list");
  return w;
}

std::string format_weights(const FusionWeights& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "," : "") + std::to_string(w[i]);
  return out;
}

data::ScoreSet z_normalize(const data::ScoreSet& scores) {
  if (scores.empty()) return scores;
  double mean = 0.0;
  for (const auto& e : scores) mean += e.score;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (const auto& e : scores) var += (e.score - mean) * (e.score - mean);
  const double sd = std::sqrt(var / static_cast<double>(scores.size()));
  data::ScoreSet out = scores;
  for (auto& e : out) e.score = sd > 0.0 ? (e.score - mean) / sd : e.score - mean;
  return out;
}

data::ScoreSet fuse_scores(const std::vector<data::ScoreSet>& systems, const FusionWeights& weights, bool z_norm) {
  if (systems.empty()) throw UsageError("fusion needs at least one system");
  if (weights.size() != systems.size()) {
    throw UsageError(std::to_string(weights.size()) + " weights for " + std::to_string(systems.size()) + " systems");
  }
  int g = 0;
  for (int w : weights) {
    if (w < 0) throw UsageError("fusion weights must be nonnegative");
    g = std::gcd(g, w);
  }
  if (g == 0) throw UsageError("fusion weights are all zero");
  const auto& ref = systems.front();
  for (std::size_t k = 1; k < systems.size(); ++k) {
    const auto& s = systems[k];
    if (s.size() != ref.size()) {
      throw DataError(DataError::Kind::kMismatch, "system " + std::to_string(k + 1) + " scores " +
                                                      std::to_string(s.size()) + " trials, system 1 scores " +
                                                      std::to_string(ref.size()));
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i].enroll_id != ref[i].enroll_id || s[i].test_id != ref[i].test_id) {
        throw DataError(DataError::Kind::kMismatch, "system " + std::to_string(k + 1) + " entry " +
                                                        std::to_string(i + 1) + " covers a different trial");
      }
    }
  }
  std::vector<data::ScoreSet> normed;
  if (z_norm) {
    for (const auto& s : systems) normed.push_back(z_normalize(s));
  }
  const auto& src = z_norm ? normed : systems;
  double total = 0.0;
  for (int w : weights) total += w / g;
  data::ScoreSet out = ref;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < src.size(); ++k) acc += (weights[k] / g) * src[k][i].score;
    out[i].score = acc / total;
  }
  return out;
}

double objective_value(const data::ScoreSet& scores, const data::TrialList& trials, Objective objective,
                       const eval::DcfParams& dcf) {
  return objective == Objective::kEer ? eval::eer(scores, trials) : eval::min_dcf(scores, trials, dcf);
}

FusionResult search_weights(const std::vector<data::ScoreSet>& systems, const data::TrialList& trials,
                            Objective objective, bool z_norm, const eval::DcfParams& dcf) {
  if (systems.empty()) throw UsageError("fusion needs at least one system");
  const std::size_t K = systems.size();
  FusionWeights w(K, 0);
  FusionResult best{{}, std::numeric_limits<double>::infinity()};
  // Odometer over {0..3}^K, last position fastest: lexicographic order.
  while (true) {
    std::size_t pos = K;
    while (pos > 0 && w[pos - 1] == kMaxWeight) w[--pos] = 0;
    if (pos == 0) break;
    ++w[pos - 1];
    const double v = objective_value(fuse_scores(systems, w, z_norm), trials, objective, dcf);
    if (v < best.value) best = {w, v};
  }
  return best;
}

}  // namespace veriforge::fusion
