#pragma once

#include <string>
#include <vector>

#include "veriforge/data/trials.hpp"
#include "veriforge/eval/metrics.hpp"

namespace veriforge::fusion {

/// One weight per system, each in {0, 1, 2, 3}, not all zero.
using FusionWeights = std::vector<int>;

inline constexpr int kMaxWeight = 3;

enum class Objective { kEer, kMinDcf };
Objective parse_objective(const std::string& s);
std::string to_string(Objective o);

/// "3,1,0" -> {3, 1, 0}.
FusionWeights parse_weights(const std::string& text);
std::string format_weights(const FusionWeights& w);

/// Per-system (s - mean) / std; the population std, left unscaled when zero.
data::ScoreSet z_normalize(const data::ScoreSet& scores);

/// fused[i] = sum_k w_k s_k[i] / sum_k w_k, with the weights first divided by their gcd
/// so proportional weight vectors give bitwise-equal output.
data::ScoreSet fuse_scores(const std::vector<data::ScoreSet>& systems, const FusionWeights& weights,
                           bool z_norm = false);

double objective_value(const data::ScoreSet& scores, const data::TrialList& trials, Objective objective,
                       const eval::DcfParams& dcf = {});

struct FusionResult {
  FusionWeights weights;
  double value = 0.0;
};

/// Exhaustive search over {0..3}^K minus the zero vector in lexicographic order; a
/// candidate replaces the incumbent only when strictly better, so ties keep the
/// lexicographically smallest vector.
FusionResult search_weights(const std::vector<data::ScoreSet>& systems, const data::TrialList& trials,
                            Objective objective, bool z_norm = false, const eval::DcfParams& dcf = {});

}  // namespace veriforge::fusion
