#include "veriforge/eval/metrics.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "veriforge/error.hpp"

namespace veriforge::eval {

void DcfParams::validate() const {
  if (!(c_miss > 0.0) || !(c_fa > 0.0)) throw UsageError("DCF costs must be > 0");
  if (!(p_target > 0.0 && p_target < 1.0)) throw UsageError("DCF target prior must lie in (0, 1)");
}

std::vector<OperatingPoint> operating_points(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw UsageError("score and label counts differ");
  struct Item {
    double score;
    bool target;
  };
  std::vector<Item> items;
  std::size_t n_tgt = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError(DataError::Kind::kInvalidValue, "non-finite score");
    items.push_back({scores[i], labels[i]});
    n_tgt += labels[i] ? 1 : 0;
  }
  const std::size_t n_non = items.size() - n_tgt;
  if (n_tgt == 0 || n_non == 0) {
    throw DataError(DataError::Kind::kInvalidValue, "metrics need at least one target and one nontarget trial");
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Walk thresholds upward; below the current threshold lie `tgt_below` targets and `non_below` nontargets.
  std::vector<OperatingPoint> out;
  std::size_t tgt_below = 0, non_below = 0;
  std::size_t i = 0;
  while (i < items.size()) {
    const double t = items[i].score;
    out.push_back({t, static_cast<double>(n_non - non_below) / static_cast<double>(n_non),
                   static_cast<double>(tgt_below) / static_cast<double>(n_tgt)});
    for (; i < items.size() && items[i].score == t; ++i) (items[i].target ? tgt_below : non_below) += 1;
  }
  out.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return out;
}

double crossing(double x0, double y0, double x1, double y1) {
  return (x0 * y1 - x1 * y0) / ((x0 - y0) - (x1 - y1));
}

double eer(const std::vector<double>& scores, const std::vector<bool>& labels) {
  const auto pts = operating_points(scores, labels);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].p_miss >= pts[i].p_fa) {
      if (pts[i].p_miss == pts[i].p_fa || i == 0) return pts[i].p_miss;
      return crossing(pts[i - 1].p_fa, pts[i - 1].p_miss, pts[i].p_fa, pts[i].p_miss);
    }
  }
  return pts.back().p_miss;  // unreachable: the last point has p_miss 1 >= p_fa 0
}

double normalized_dcf(const OperatingPoint& p, const DcfParams& params) {
  const double raw = params.c_miss * p.p_miss * params.p_target + params.c_fa * p.p_fa * (1.0 - params.p_target);
  return raw / std::min(params.c_miss * params.p_target, params.c_fa * (1.0 - params.p_target));
}

double min_dcf(const std::vector<double>& scores, const std::vector<bool>& labels, const DcfParams& params) {
  params.validate();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : operating_points(scores, labels)) best = std::min(best, normalized_dcf(p, params));
  return best;
}

double eer(const data::ScoreSet& scores, const data::TrialList& trials) {
  data::check_alignment(scores, trials);
  return eer(data::score_values(scores), data::trial_labels(trials));
}

double min_dcf(const data::ScoreSet& scores, const data::TrialList& trials, const DcfParams& params) {
  data::check_alignment(scores, trials);
  return min_dcf(data::score_values(scores), data::trial_labels(trials), params);
}

DetCurve det_points(const data::ScoreSet& scores, const data::TrialList& trials, std::string label) {
  data::check_alignment(scores, trials);
  return {std::move(label), operating_points(data::score_values(scores), data::trial_labels(trials))};
}

DetFormat det_format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return DetFormat::kCsv;
  if (ext == ".svg") return DetFormat::kSvg;
  throw UsageError("cannot infer DET format from '" + path.string() + "' (use .csv or .svg)");
}

std::string det_csv(const DetCurve& curve) {
  std::string out = "p_fa,p_miss\n";
  char buf[80];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.p_fa, p.p_miss);
    out += buf;
  }
  return out;
}

DetCurve parse_det_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "p_fa,p_miss") {
    throw DataError(DataError::Kind::kMalformedHeader, "DET csv must start with 'p_fa,p_miss'");
  }
  DetCurve c;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      OperatingPoint p;
      p.p_fa = std::stod(line.substr(0, comma));
      p.p_miss = std::stod(line.substr(comma + 1));
      c.points.push_back(p);
    } catch (const std::logic_error&) {
      throw DataError(DataError::Kind::kMalformedLine, "DET csv line " + std::to_string(lineno) + ": '" + line + "'");
    }
  }
  return c;
}

double probit(double p) { return std::sqrt(2.0) * boost::math::erf_inv(2.0 * p - 1.0); }

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string det_svg(const std::vector<DetCurve>& curves) {
  // Plot window in probability, mapped through the normal quantile.
  constexpr double kLo = 0.001, kHi = 0.5;
  constexpr double kW = 480, kH = 480, kMargin = 60;
  const double zlo = probit(kLo), zhi = probit(kHi);
  auto px = [&](double p) {
    const double z = probit(std::clamp(p, kLo, kHi));
    return kMargin + (z - zlo) / (zhi - zlo) * kW;
  };
  auto py = [&](double p) {
    const double z = probit(std::clamp(p, kLo, kHi));
    return kMargin + kH - (z - zlo) / (zhi - zlo) * kH;
  };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  const double ticks[] = {0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4};

  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW + 2 * kMargin << "\" height=\"" << kH + 2 * kMargin
    << "\">\n"
    << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kW << "\" height=\"" << kH
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ticks) {
    const std::string label = t < 0.01 ? std::to_string(t * 100).substr(0, 3) : std::to_string(int(t * 100 + 0.5));
    s << "<line x1=\"" << px(t) << "\" y1=\"" << kMargin << "\" x2=\"" << px(t) << "\" y2=\"" << kMargin + kH
      << "\" stroke=\"#ddd\"/>\n"
      << "<line x1=\"" << kMargin << "\" y1=\"" << py(t) << "\" x2=\"" << kMargin + kW << "\" y2=\"" << py(t)
      << "\" stroke=\"#ddd\"/>\n"
      << "<text x=\"" << px(t) << "\" y=\"" << kMargin + kH + 16 << "\" font-size=\"10\" text-anchor=\"middle\">"
      << label << "</text>\n"
      << "<text x=\"" << kMargin - 6 << "\" y=\"" << py(t) + 3 << "\" font-size=\"10\" text-anchor=\"end\">" << label
      << "</text>\n";
  }
  s << "<text x=\"" << kMargin + kW / 2 << "\" y=\"" << kMargin + kH + 36
    << "\" font-size=\"12\" text-anchor=\"middle\">False acceptance rate (%)</text>\n"
    << "<text x=\"" << 16 << "\" y=\"" << kMargin + kH / 2 << "\" font-size=\"12\" text-anchor=\"middle\" "
    << "transform=\"rotate(-90 16 " << kMargin + kH / 2 << ")\">False rejection rate (%)</text>\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kColors[c % std::size(kColors)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : curves[c].points) s << px(p.p_fa) << ',' << py(p.p_miss) << ' ';
    s << "\"/>\n";
    const double ly = kMargin + 16 + 16 * static_cast<double>(c);
    s << "<line x1=\"" << kMargin + kW - 150 << "\" y1=\"" << ly << "\" x2=\"" << kMargin + kW - 130 << "\" y2=\""
      << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << kMargin + kW - 125 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">"
      << xml_escape(curves[c].label.empty() ? "system " + std::to_string(c + 1) : curves[c].label) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void emit_det(const std::vector<DetCurve>& curves, const std::filesystem::path& path, DetFormat format) {
  if (curves.empty() || curves.front().points.empty()) throw UsageError("cannot emit an empty DET curve");
  std::string text;
  if (format == DetFormat::kCsv) {
    if (curves.size() != 1) throw UsageError("csv DET output holds exactly one curve");
    text = det_csv(curves.front());
  } else {
    text = det_svg(curves);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::kUnwritable, "cannot write " + path.string());
  out << text;
  if (!out) throw DataError(DataError::Kind::kUnwritable, "write failed for " + path.string());
}

}  // namespace veriforge::eval
