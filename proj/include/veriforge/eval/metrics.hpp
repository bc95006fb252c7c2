#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "veriforge/data/trials.hpp"

namespace veriforge::eval {

struct DcfParams {
  double c_miss = 1.0;
  double c_fa = 1.0;
  double p_target = 0.05;
  void validate() const;
};

/// Error rates at one candidate threshold. Scores >= threshold are accepted.
struct OperatingPoint {
  double threshold = 0.0;
  double p_fa = 0.0;
  double p_miss = 0.0;
};

/// Sorted distinct scores followed by +infinity, with the rates at each.
/// Throws DataError unless there is at least one target and one nontarget.
std::vector<OperatingPoint> operating_points(const std::vector<double>& scores, const std::vector<bool>& labels);

/// Where the polyline through consecutive operating points meets p_fa = p_miss.
double eer(const std::vector<double>& scores, const std::vector<bool>& labels);
double eer(const data::ScoreSet& scores, const data::TrialList& trials);

/// Normalized: min_t DCF(t) / min(c_miss * p_target, c_fa * (1 - p_target)).
double min_dcf(const std::vector<double>& scores, const std::vector<bool>& labels, const DcfParams& params = {});
double min_dcf(const data::ScoreSet& scores, const data::TrialList& trials, const DcfParams& params = {});

/// Normalized DCF at one operating point.
double normalized_dcf(const OperatingPoint& p, const DcfParams& params);

/// Intersection of segment (x0, y0)-(x1, y1) with y = x, where x0 > y0 and x1 < y1.
double crossing(double x0, double y0, double x1, double y1);

struct DetCurve {
  std::string label;
  std::vector<OperatingPoint> points;  // threshold ascending
};

DetCurve det_points(const data::ScoreSet& scores, const data::TrialList& trials, std::string label = "");

enum class DetFormat { kCsv, kSvg };
/// From the path extension (.csv or .svg).
DetFormat det_format_for(const std::filesystem::path& path);

/// Header `p_fa,p_miss`, then one row per point with 17 significant digits.
std::string det_csv(const DetCurve& curve);
DetCurve parse_det_csv(const std::string& text);
/// Normal-deviate axes, one polyline per curve, legend from the labels.
std::string det_svg(const std::vector<DetCurve>& curves);

void emit_det(const std::vector<DetCurve>& curves, const std::filesystem::path& path, DetFormat format);

/// Standard normal quantile.
double probit(double p);

}  // namespace veriforge::eval
