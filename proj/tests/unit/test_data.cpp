#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "veriforge/data/manifest.hpp"
#include "veriforge/data/trials.hpp"
#include "veriforge/data/wav.hpp"
#include "veriforge/error.hpp"

using namespace veriforge;
using namespace veriforge::data;
using vf_test::TempDir;

namespace {

DataError::Kind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no DataError thrown";
  return DataError::Kind::kInvalidValue;
}

std::string pcm16(std::initializer_list<std::int16_t> xs) {
  std::string s;
  for (auto x : xs) vf_test::put_le<std::int16_t>(s, x);
  return s;
}

}  // namespace

TEST(Wav, Pcm16IsScaledByTwoToTheFifteen) {
  TempDir dir;
  vf_test::write_raw_wav(dir / "a.wav", 1, 1, 16000, 16, pcm16({16384, -16384}));
  const auto w = load_wav(dir / "a.wav");
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w.samples[0], 0.5);
  EXPECT_EQ(w.samples[1], -0.5);
  EXPECT_EQ(w.sample_rate, 16000);
}

TEST(Wav, EmptyDataChunkIsEmptyAudio) {
  TempDir dir;
  vf_test::write_raw_wav(dir / "e.wav", 1, 1, 16000, 16, "");
  try {
    load_wav(dir / "e.wav");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind(), DataError::Kind::kEmptyAudio);
    EXPECT_NE(std::string(e.what()).find("empty audio"), std::string::npos);
  }
}

TEST(Wav, StereoIsAveraged) {
  TempDir dir;
  std::string payload;
  vf_test::put_le<float>(payload, 0.2f);
  vf_test::put_le<float>(payload, 0.4f);
  vf_test::write_raw_wav(dir / "s.wav", 3, 2, 16000, 32, payload);
  const auto w = load_wav(dir / "s.wav");
  ASSERT_EQ(w.size(), 1u);
  EXPECT_NEAR(w.samples[0], 0.3, 1e-7);
}

TEST(Wav, ErrorKindsAreDistinct) {
  TempDir dir;
  EXPECT_EQ(kind_of([&] { load_wav(dir / "missing.wav"); }), DataError::Kind::kMissingFile);
  vf_test::write_text(dir / "junk.wav", "this is not a wave file at all");
  EXPECT_EQ(kind_of([&] { load_wav(dir / "junk.wav"); }), DataError::Kind::kMalformedHeader);
  vf_test::write_raw_wav(dir / "u8.wav", 1, 1, 16000, 8, std::string(4, '\x80'));
  EXPECT_EQ(kind_of([&] { load_wav(dir / "u8.wav"); }), DataError::Kind::kUnsupportedEncoding);
  vf_test::write_raw_wav(dir / "adpcm.wav", 2, 1, 16000, 16, pcm16({1, 2}));
  EXPECT_EQ(kind_of([&] { load_wav(dir / "adpcm.wav"); }), DataError::Kind::kUnsupportedEncoding);
}

TEST(Wav, LoadIsDeterministicAndRoundTripsFloat) {
  TempDir dir;
  Rng rng(3);
  Waveform w;
  w.samples = vf_test::random_vector(1000, rng, -0.9, 0.9);
  for (auto& s : w.samples) s = static_cast<float>(s);
  write_wav(dir / "f.wav", w, WavEncoding::kFloat32);
  const auto a = load_wav(dir / "f.wav");
  const auto b = load_wav(dir / "f.wav");
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.samples, w.samples);
}

TEST(Wav, Pcm16WriteRoundTripWithinOneStep) {
  TempDir dir;
  Waveform w;
  w.samples = {0.0, 0.25, -0.25, 0.999, -1.0};
  write_wav(dir / "p.wav", w);
  const auto r = load_wav(dir / "p.wav");
  ASSERT_EQ(r.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(r.samples[i], w.samples[i], 1.0 / 32768);
}

TEST(Manifest, ParsesRecordsInOrder) {
  const auto r = parse_manifest_text("u1 s1 a.wav\nu2 s2 b.wav\n", "");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].utterance_id, "u1");
  EXPECT_EQ(r[0].speaker_id, "s1");
  EXPECT_EQ(r[0].path, "a.wav");
  EXPECT_EQ(r[1].utterance_id, "u2");
}

TEST(Manifest, DuplicateIdNamesLineTwo) {
  try {
    parse_manifest_text("u1 s1 a.wav\nu1 s2 b.wav\n", "");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind(), DataError::Kind::kDuplicateId);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Manifest, EmptyFileGivesEmptyList) {
  TempDir dir;
  vf_test::write_text(dir / "m.txt", "");
  EXPECT_TRUE(parse_manifest(dir / "m.txt").empty());
}

TEST(Manifest, WrongFieldCountNamesLine) {
  try {
    parse_manifest_text("u1 s1 a.wav\nu2 s2\n", "");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind(), DataError::Kind::kMalformedLine);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Manifest, RelativePathsResolveAgainstManifestDir) {
  TempDir dir;
  vf_test::write_text(dir / "m.txt", "u1 s1 wav/a.wav\n");
  const auto r = parse_manifest(dir / "m.txt");
  EXPECT_EQ(r[0].path, dir.path() / "wav/a.wav");
}

TEST(Trials, LabelsMapToTargetFlag) {
  const auto t = parse_trials_text("1 a.wav b.wav\n0 a.wav a.wav\n");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0], (Trial{true, "a.wav", "b.wav"}));
  EXPECT_EQ(t[1], (Trial{false, "a.wav", "a.wav"}));
}

TEST(Trials, RejectsBadLabelAndFieldCount) {
  EXPECT_THROW(parse_trials_text("2 a.wav b.wav\n"), DataError);
  EXPECT_THROW(parse_trials_text("1 a.wav\n"), DataError);
}

TEST(Trials, WriteThenParseIsIdentity) {
  TempDir dir;
  Rng rng(11);
  TrialList list;
  for (int i = 0; i < 50; ++i) {
    list.push_back({uniform_int(rng, 0, 1) == 1, "e" + std::to_string(uniform_int(rng, 0, 9)) + ".wav",
                    "dir/t" + std::to_string(i) + ".wav"});
  }
  write_trials(dir / "t.txt", list);
  EXPECT_EQ(parse_trials(dir / "t.txt"), list);
}

TEST(Scores, RoundTripKeepsNineDigitsAndOrder) {
  ScoreSet s = {{"a", "b", 0.123456789123}, {"c", "d", -4.5e-7}};
  const auto r = parse_scores_text(format_scores(s));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1].enroll_id, "c");
  EXPECT_NEAR(r[0].score, s[0].score, 1e-9);
  EXPECT_NEAR(r[1].score, s[1].score, 1e-15);
}

TEST(Scores, AlignmentMismatchIsReported) {
  TrialList t = {{true, "a", "b"}};
  ScoreSet s = {{"a", "c", 0.1}};
  EXPECT_EQ(kind_of([&] { check_alignment(s, t); }), DataError::Kind::kMismatch);
  EXPECT_EQ(kind_of([&] { check_alignment({}, t); }), DataError::Kind::kMismatch);
}

TEST(SampleSegment, FiveSecondsToTwo) {
  Waveform w;
  w.samples.resize(80000);
  for (std::size_t i = 0; i < w.size(); ++i) w.samples[i] = static_cast<double>(i);
  Rng rng(1);
  for (int k = 0; k < 20; ++k) {
    const auto s = sample_segment(w, 2.0, rng);
    ASSERT_EQ(s.size(), 32000u);
    const auto start = static_cast<std::size_t>(s.samples[0]);
    EXPECT_LE(start, 48000u);
    EXPECT_EQ(s.samples.back(), static_cast<double>(start + 31999));
  }
}

TEST(SampleSegment, ExactLengthReturnsWholeWaveform) {
  Waveform w;
  Rng r0(2);
  w.samples = vf_test::random_vector(32000, r0);
  Rng rng(5);
  EXPECT_EQ(sample_segment(w, 2.0, rng).samples, w.samples);
}

TEST(SampleSegment, ShortInputIsTiled) {
  Waveform w;
  Rng r0(4);
  w.samples = vf_test::random_vector(16000, r0);
  Rng rng(5);
  const auto s = sample_segment(w, 2.0, rng);
  ASSERT_EQ(s.size(), 32000u);
  for (std::size_t i = 0; i < 32000; ++i) ASSERT_EQ(s.samples[i], w.samples[i % 16000]);
}

TEST(SampleSegment, LengthIsAlwaysRoundedDuration) {
  Rng rng(9);
  for (int k = 0; k < 200; ++k) {
    Waveform w;
    w.samples.assign(static_cast<std::size_t>(uniform_int(rng, 1, 50000)), 0.1);
    const double d = uniform(rng, 0.01, 4.0);
    EXPECT_EQ(sample_segment(w, d, rng).size(), static_cast<std::size_t>(std::llround(d * 16000)));
  }
}

TEST(SampleSegment, NonPositiveDurationIsUsageError) {
  Waveform w;
  w.samples.assign(10, 0.0);
  Rng rng(1);
  EXPECT_THROW(sample_segment(w, 0.0, rng), UsageError);
}
