#include <gtest/gtest.h>

#include <atomic>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "metric_oracle.hpp"
#include "test_util.hpp"
#include "veriforge/data/trials.hpp"
#include "veriforge/data/wav.hpp"
#include "veriforge/error.hpp"
#include "veriforge/eval/metrics.hpp"
#include "veriforge/eval/scoring.hpp"
#include "veriforge/nn/model.hpp"

using namespace veriforge;
using namespace veriforge::eval;
using data::Waveform;
using nn::Tensor;
using vf_test::brute_eer;
using vf_test::brute_min_dcf;
using vf_test::brute_points;

namespace {

struct Fixture {
  std::vector<double> scores;
  std::vector<bool> labels;
};

Fixture from_sets(std::vector<double> tgt, std::vector<double> non) {
  Fixture f;
  for (double t : tgt) f.scores.push_back(t), f.labels.push_back(true);
  for (double n : non) f.scores.push_back(n), f.labels.push_back(false);
  return f;
}

Fixture random_fixture(Rng& rng, std::size_t max_n) {
  const auto n = static_cast<std::size_t>(uniform_int(rng, 2, static_cast<std::int64_t>(max_n)));
  const bool coarse = uniform_int(rng, 0, 2) == 0;  // many ties
  Fixture f;
  for (std::size_t i = 0; i < n; ++i) {
    const bool target = i == 0 || (i != 1 && uniform_int(rng, 0, 1) == 1);
    double s = uniform(rng, -1, 1) + (target ? 0.5 : 0.0);
    if (coarse) s = std::round(s * 4) / 4;
    f.scores.push_back(s);
    f.labels.push_back(target);
  }
  return f;
}

class ConstEmbedder : public Embedder {
 public:
  Tensor embed(const std::vector<Waveform>& segs) const override {
    Tensor t({static_cast<std::int64_t>(segs.size()), 3});
    for (std::size_t i = 0; i < segs.size(); ++i) t[i * 3] = 0.3, t[i * 3 + 1] = -1.2, t[i * 3 + 2] = 2.0;
    return t;
  }
};

// [1, 0] for segments starting with a positive sample, [0, 1] otherwise.
class SignEmbedder : public Embedder {
 public:
  Tensor embed(const std::vector<Waveform>& segs) const override {
    ++calls;
    Tensor t({static_cast<std::int64_t>(segs.size()), 2});
    for (std::size_t i = 0; i < segs.size(); ++i) t[i * 2 + (segs[i].samples[0] > 0 ? 0 : 1)] = 1.0;
    return t;
  }
  mutable std::atomic<int> calls{0};
};

Waveform constant_wave(double v, double seconds) {
  Waveform w;
  w.samples.assign(static_cast<std::size_t>(seconds * 16000), v);
  return w;
}

}  // namespace

TEST(Tta, ThirteenSecondsGivesWholeSecondOffsets) {
  const auto off = tta_offsets(13 * 16000, 64000);
  ASSERT_EQ(off.size(), 10u);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(off[k], k * 16000);
}

TEST(Tta, FourSecondsGivesTenIdenticalSegments) {
  Rng rng(1);
  Waveform w;
  w.samples = vf_test::random_vector(64000, rng);
  const auto segs = tta_segments(w);
  ASSERT_EQ(segs.size(), 10u);
  for (const auto& s : segs) EXPECT_EQ(s.samples, w.samples);
}

TEST(Tta, SegmentsAreAlwaysFourSeconds) {
  Rng rng(2);
  for (double sec : {0.7, 2.0, 4.0, 5.3, 11.0}) {
    Waveform w;
    w.samples = vf_test::random_vector(static_cast<std::size_t>(sec * 16000), rng);
    const auto segs = tta_segments(w);
    ASSERT_EQ(segs.size(), 10u);
    for (const auto& s : segs) EXPECT_EQ(s.size(), 64000u);
    if (sec < 4.0) {
      for (std::size_t i = 0; i < 64000; ++i) ASSERT_EQ(segs[3].samples[i], w.samples[i % w.size()]);
    }
  }
}

TEST(ScorePair, ConstantEmbeddingScoresOne) {
  ConstEmbedder e;
  Rng rng(3);
  Waveform a, b;
  a.samples = vf_test::random_vector(70000, rng);
  b.samples = vf_test::random_vector(90000, rng);
  EXPECT_NEAR(score_pair(e, a, b), 1.0, 1e-8);
}

TEST(ScorePair, OrthogonalSidesScoreZero) {
  SignEmbedder e;
  EXPECT_NEAR(score_pair(e, constant_wave(0.5, 5), constant_wave(-0.5, 5)), 0.0, 1e-15);
}

TEST(ScorePair, FourSecondUtteranceAgainstItselfScoresOne) {
  Rng rng(4);
  nn::SpeakerModel m(nn::TrunkConfig::for_family(nn::TrunkFamily::kResnetQSap), rng);
  ModelEmbedder e(m, dsp::FrontendConfig::logmel64());
  Waveform w;
  w.samples = vf_test::random_vector(4 * 16000, rng, -0.5, 0.5);
  EXPECT_NEAR(score_pair(e, w, w), 1.0, 1e-5);
}

TEST(ScorePair, MeanOfAllCrossSegmentCosines) {
  Rng rng(8);
  nn::SpeakerModel m(nn::TrunkConfig::for_family(nn::TrunkFamily::kTdnnLite), rng);
  ModelEmbedder e(m, dsp::FrontendConfig::mfcc80());
  Waveform a, b;
  a.samples = vf_test::random_vector(6 * 16000, rng, -0.5, 0.5);
  b.samples = vf_test::random_vector(5 * 16000, rng, -0.5, 0.5);
  const Tensor ea = e.embed(tta_segments(a)), eb = e.embed(tta_segments(b));
  const auto E = static_cast<std::size_t>(ea.dim(1));
  double total = 0.0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t k = 0; k < 10; ++k) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t j = 0; j < E; ++j) {
        dot += ea[i * E + j] * eb[k * E + j];
        na += ea[i * E + j] * ea[i * E + j];
        nb += eb[k * E + j] * eb[k * E + j];
      }
      total += dot / std::sqrt((na + 1e-8) * (nb + 1e-8));
    }
  EXPECT_NEAR(score_pair(e, a, b), total / 100.0, 1e-12);
  // Longer than one segment: self-similarity averages over distinct segments and sits below 1.
  EXPECT_LT(score_pair(e, a, a), 1.0 - 1e-5);
}

TEST(ScoreTrials, OrderRepeatsAndEmbedCount) {
  vf_test::TempDir dir;
  data::write_wav(dir / "p1.wav", constant_wave(0.5, 1));
  data::write_wav(dir / "p2.wav", constant_wave(0.25, 5));
  data::write_wav(dir / "n1.wav", constant_wave(-0.5, 2));
  const data::TrialList trials = {{true, "p1.wav", "p2.wav"},
                                  {false, "p1.wav", "n1.wav"},
                                  {true, "p1.wav", "p2.wav"},
                                  {false, "n1.wav", "p2.wav"}};
  for (int workers : {1, 3}) {
    SignEmbedder e;
    ScoringStats stats;
    const auto s = score_trials(e, trials, dir.path(), workers, &stats);
    ASSERT_EQ(s.size(), 4u);
    EXPECT_EQ(stats.embed_calls, 3u);
    EXPECT_EQ(e.calls.load(), 3);
    EXPECT_EQ(s[0].score, s[2].score);
    EXPECT_NEAR(s[0].score, 1.0, 1e-8);
    EXPECT_NEAR(s[1].score, 0.0, 1e-12);
    EXPECT_EQ(s[3].enroll_id, "n1.wav");
    EXPECT_EQ(s[3].test_id, "p2.wav");
  }
}

TEST(ScoreTrials, MissingAudioNamesTrialLine) {
  vf_test::TempDir dir;
  data::write_wav(dir / "a.wav", constant_wave(0.5, 1));
  const data::TrialList trials = {{true, "a.wav", "a.wav"}, {false, "a.wav", "gone.wav"}};
  SignEmbedder e;
  try {
    score_trials(e, trials, dir.path());
    FAIL();
  } catch (const DataError& err) {
    EXPECT_EQ(err.kind(), DataError::Kind::kMissingFile);
    EXPECT_NE(std::string(err.what()).find("trial line 2"), std::string::npos) << err.what();
  }
}

TEST(Metrics, HandFixtures) {
  auto a = from_sets({0.9, 0.8}, {0.7, 0.1});
  EXPECT_EQ(eer(a.scores, a.labels), 0.0);
  EXPECT_EQ(min_dcf(a.scores, a.labels), 0.0);
  auto b = from_sets({0.8, 0.4}, {0.6, 0.2});
  EXPECT_EQ(eer(b.scores, b.labels), 0.5);
  auto c = from_sets({0.9, 0.8, 0.7}, {0.75, 0.2, 0.1});
  EXPECT_NEAR(eer(c.scores, c.labels), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(min_dcf(c.scores, c.labels), 1.0 / 3.0, 1e-12);
  auto d = from_sets({0.5, 0.5}, {0.5, 0.5, 0.5});
  EXPECT_NEAR(min_dcf(d.scores, d.labels), 1.0, 1e-12);
}

TEST(Metrics, InterpolatesBetweenThresholds) {
  // A tie moves both rates at once: (2/3, 0) -> (0, 1/2), crossing at 2/7.
  auto f = from_sets({0.4, 0.9}, {0.1, 0.4, 0.4});
  EXPECT_NEAR(eer(f.scores, f.labels), 2.0 / 7.0, 1e-15);
}

TEST(Metrics, DegenerateListsAreErrors) {
  EXPECT_THROW(eer(std::vector<double>{0.1, 0.2}, std::vector<bool>{true, true}), DataError);
  EXPECT_THROW(min_dcf(std::vector<double>{0.1, 0.2}, std::vector<bool>{false, false}), DataError);
  EXPECT_THROW(eer(std::vector<double>{std::nan(""), 0.1}, std::vector<bool>{true, false}), DataError);
  DcfParams bad;
  bad.p_target = 1.0;
  EXPECT_THROW(min_dcf(std::vector<double>{0.1, 0.2}, std::vector<bool>{true, false}, bad), UsageError);
}

TEST(Metrics, MatchBruteForceExactly) {
  for (int k = 0; k < 100; ++k) {
    Rng rng(static_cast<std::uint64_t>(k));
    const auto f = random_fixture(rng, 1000);
    ASSERT_EQ(eer(f.scores, f.labels), brute_eer(f.scores, f.labels)) << "set " << k;
    ASSERT_EQ(min_dcf(f.scores, f.labels), brute_min_dcf(f.scores, f.labels, {})) << "set " << k;
  }
}

TEST(Metrics, RankInvariantAndLabelFlipSymmetric) {
  for (int k = 0; k < 50; ++k) {
    Rng rng(static_cast<std::uint64_t>(500 + k));
    const auto f = random_fixture(rng, 400);
    auto g = f;
    for (auto& s : g.scores) s = 2 * s + 1;
    EXPECT_EQ(eer(f.scores, f.labels), eer(g.scores, g.labels));
    EXPECT_EQ(min_dcf(f.scores, f.labels), min_dcf(g.scores, g.labels));
    auto h = f;
    for (auto& s : h.scores) s = -s;
    for (std::size_t i = 0; i < h.labels.size(); ++i) h.labels[i] = !h.labels[i];
    EXPECT_EQ(eer(f.scores, f.labels), eer(h.scores, h.labels)) << k;
  }
}

TEST(Metrics, MinDcfNotAboveDcfAtEerThreshold) {
  for (int k = 0; k < 50; ++k) {
    Rng rng(static_cast<std::uint64_t>(900 + k));
    const auto f = random_fixture(rng, 300);
    const auto pts = operating_points(f.scores, f.labels);
    std::size_t i = 0;
    while (pts[i].p_miss < pts[i].p_fa) ++i;
    EXPECT_LE(min_dcf(f.scores, f.labels), normalized_dcf(pts[i], {}));
  }
}

namespace {

data::ScoreSet to_scores(const Fixture& f, data::TrialList& trials) {
  data::ScoreSet s;
  trials.clear();
  for (std::size_t i = 0; i < f.scores.size(); ++i) {
    const std::string e = "e" + std::to_string(i), t = "t" + std::to_string(i);
    s.push_back({e, t, f.scores[i]});
    trials.push_back({f.labels[i], e, t});
  }
  return s;
}

}  // namespace

TEST(Det, TwoScoresGiveThreePointsWithEndpoints) {
  data::TrialList trials;
  const auto s = to_scores(from_sets({0.8}, {0.2}), trials);
  const auto c = det_points(s, trials);
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_EQ(c.points.front().p_fa, 1.0);
  EXPECT_EQ(c.points.front().p_miss, 0.0);
  EXPECT_EQ(c.points.back().p_fa, 0.0);
  EXPECT_EQ(c.points.back().p_miss, 1.0);
}

TEST(Det, MatchesBruteForceAndIsMonotone) {
  Rng rng(77);
  Fixture f;
  while (f.scores.size() < 1000) {
    const bool t = uniform_int(rng, 0, 3) == 0;
    f.scores.push_back(std::round((uniform(rng, -1, 1) + (t ? 0.7 : 0)) * 200) / 200);
    f.labels.push_back(t);
  }
  data::TrialList trials;
  const auto c = det_points(to_scores(f, trials), trials);
  const auto ref = brute_points(f.scores, f.labels);
  ASSERT_EQ(c.points.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_EQ(c.points[i].threshold, ref[i].threshold);
    EXPECT_EQ(c.points[i].p_fa, ref[i].p_fa);
    EXPECT_EQ(c.points[i].p_miss, ref[i].p_miss);
    if (i > 0) {
      EXPECT_LE(c.points[i].p_fa, c.points[i - 1].p_fa);
      EXPECT_GE(c.points[i].p_miss, c.points[i - 1].p_miss);
    }
  }
  // The EER sits on the segment next to the point where the rates are closest.
  std::size_t best = 0;
  for (std::size_t i = 1; i < ref.size(); ++i) {
    if (std::abs(ref[i].p_fa - ref[i].p_miss) < std::abs(ref[best].p_fa - ref[best].p_miss)) best = i;
  }
  std::size_t first = 0;
  while (ref[first].p_miss < ref[first].p_fa) ++first;
  EXPECT_TRUE(best == first || best + 1 == first);
  const double e = eer(f.scores, f.labels);
  const std::size_t lo = first == 0 ? 0 : first - 1;
  EXPECT_GE(e, std::min({ref[lo].p_fa, ref[lo].p_miss, ref[first].p_fa, ref[first].p_miss}));
  EXPECT_LE(e, std::max({ref[lo].p_fa, ref[lo].p_miss, ref[first].p_fa, ref[first].p_miss}));
}

TEST(Det, CsvLinesAndRoundTrip) {
  data::TrialList trials;
  const auto s = to_scores(from_sets({0.8}, {0.2}), trials);
  const auto c = det_points(s, trials);
  const auto csv = det_csv(c);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  Rng rng(5);
  const auto big = det_points(to_scores(random_fixture(rng, 500), trials), trials);
  const auto back = parse_det_csv(det_csv(big));
  ASSERT_EQ(back.points.size(), big.points.size());
  for (std::size_t i = 0; i < big.points.size(); ++i) {
    EXPECT_EQ(back.points[i].p_fa, big.points[i].p_fa);
    EXPECT_EQ(back.points[i].p_miss, big.points[i].p_miss);
  }
  EXPECT_THROW(parse_det_csv("fa,miss\n"), DataError);
}

TEST(Det, SvgIsWellFormedWithLegend) {
  Rng rng(6);
  data::TrialList t1, t2;
  auto a = det_points(to_scores(random_fixture(rng, 300), t1), t1, "system A");
  auto b = det_points(to_scores(random_fixture(rng, 300), t2), t2, "system <B>");
  const auto svg = det_svg({a, b});
  std::istringstream in(svg);
  boost::property_tree::ptree tree;
  ASSERT_NO_THROW(boost::property_tree::read_xml(in, tree));
  ASSERT_EQ(tree.count("svg"), 1u);
  std::size_t polylines = 0;
  std::function<void(const boost::property_tree::ptree&)> walk = [&](const boost::property_tree::ptree& n) {
    for (const auto& [k, child] : n) {
      if (k == "polyline") ++polylines;
      walk(child);
    }
  };
  walk(tree.get_child("svg"));
  EXPECT_EQ(polylines, 2u);
  EXPECT_NE(svg.find("system A"), std::string::npos);
  EXPECT_NE(svg.find("system &lt;B&gt;"), std::string::npos);
}

TEST(Det, EmitChoosesFormatAndChecksPaths) {
  vf_test::TempDir dir;
  data::TrialList trials;
  const auto c = det_points(to_scores(from_sets({0.8, 0.3}, {0.2}), trials), trials);
  EXPECT_EQ(det_format_for("x.csv"), DetFormat::kCsv);
  EXPECT_EQ(det_format_for("x.svg"), DetFormat::kSvg);
  EXPECT_THROW(det_format_for("x.png"), UsageError);
  emit_det({c}, dir / "c.csv", DetFormat::kCsv);
  EXPECT_EQ(vf_test::read_text(dir / "c.csv"), det_csv(c));
  EXPECT_THROW(emit_det({c, c}, dir / "two.csv", DetFormat::kCsv), UsageError);
  EXPECT_THROW(emit_det({c}, dir / "no/such/dir/c.svg", DetFormat::kSvg), DataError);
}

TEST(Probit, KnownQuantiles) {
  EXPECT_NEAR(probit(0.5), 0.0, 1e-15);
  EXPECT_NEAR(probit(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(probit(0.001), -3.090232306167813, 1e-12);
}
