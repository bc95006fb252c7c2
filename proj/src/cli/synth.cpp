#include "veriforge/cli/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "veriforge/augment/augment.hpp"
#include "veriforge/data/manifest.hpp"
#include "veriforge/data/trials.hpp"
#include "veriforge/data/wav.hpp"
#include "veriforge/error.hpp"
#include "veriforge/rng.hpp"

namespace veriforge::cli {
namespace {

struct Voice {
  double tones[3];
  double tone_amp[3];
  double f0;
  double formant[2];
  double bandwidth[2];
};

Voice make_voice(std::uint64_t seed, int speaker) {
  Rng rng = derive_rng(seed, {0x766f696365, static_cast<std::uint64_t>(speaker)});
  Voice v{};
  for (int i = 0; i < 3; ++i) {
    v.tones[i] = uniform(rng, 200.0, 3400.0);
    v.tone_amp[i] = uniform(rng, 0.3, 1.0);
  }
  v.f0 = uniform(rng, 90.0, 260.0);
  v.formant[0] = uniform(rng, 300.0, 900.0);
  v.formant[1] = uniform(rng, 1000.0, 2800.0);
  v.bandwidth[0] = uniform(rng, 60.0, 150.0);
  v.bandwidth[1] = uniform(rng, 80.0, 200.0);
  return v;
}

// Two-pole resonator normalized to unit gain at its center frequency.
void resonate(std::vector<double>& x, double freq, double bw, int sr) {
  const double r = std::exp(-std::numbers::pi * bw / sr);
  const double theta = 2.0 * std::numbers::pi * freq / sr;
  const double a1 = 2.0 * r * std::cos(theta), a2 = -r * r;
  const double gain = (1.0 - r) * std::sqrt(1.0 - 2.0 * r * std::cos(2.0 * theta) + r * r);
  double y1 = 0.0, y2 = 0.0;
  for (auto& s : x) {
    const double y = gain * s + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    s = y;
  }
}

data::Waveform make_utterance(const Voice& v, const SynthOptions& opt, Rng& rng) {
  const int sr = opt.sample_rate;
  const double dur = uniform(rng, opt.min_duration_s, opt.max_duration_s);
  const auto n = static_cast<std::size_t>(std::llround(dur * sr));
  const double jitter = uniform(rng, 0.98, 1.02);
  const double rate = uniform(rng, 3.0, 5.0);
  const double env_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  double phase[3];
  for (double& p : phase) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);

  std::vector<double> pulses(n, 0.0);
  const double period = sr / (v.f0 * jitter);
  for (double t = uniform(rng, 0.0, period); t < static_cast<double>(n); t += period) {
    pulses[static_cast<std::size_t>(t)] = 1.0;
  }
  resonate(pulses, v.formant[0], v.bandwidth[0], sr);
  resonate(pulses, v.formant[1], v.bandwidth[1], sr);
  const double pulse_rms = augment::rms(pulses);

  data::Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    double s = pulse_rms > 0.0 ? 0.7 * pulses[i] / pulse_rms : 0.0;
    for (int k = 0; k < 3; ++k) s += v.tone_amp[k] * std::sin(2.0 * std::numbers::pi * v.tones[k] * jitter * t + phase[k]);
    const double env = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * rate * t + env_phase);
    w.samples[i] = s * env;
  }
  const double sig_rms = augment::rms(w.samples);
  const double noise_sd = sig_rms * std::pow(10.0, -opt.snr_db / 20.0);
  for (auto& s : w.samples) s += normal(rng, 0.0, noise_sd);
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  for (auto& s : w.samples) s *= 0.5 / peak;
  return w;
}

std::string name_of(int speaker) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "spk%03d", speaker);
  return buf;
}

}  // namespace

SynthSummary synth_corpus(const std::filesystem::path& out_dir, const SynthOptions& opt) {
  if (opt.n_speakers < 2 || opt.n_utts < 1 || opt.n_heldout < 2) {
    throw UsageError("synth needs >= 2 speakers, >= 1 utterance and >= 2 held-out utterances per speaker");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wav", ec);
  if (!ec) std::filesystem::create_directories(out_dir / "heldout", ec);
  if (ec) throw DataError(DataError::Kind::kUnwritable, "cannot create " + out_dir.string() + ": " + ec.message());

  SynthSummary sum;
  std::vector<data::UtteranceRecord> train;
  std::vector<std::vector<std::string>> heldout(static_cast<std::size_t>(opt.n_speakers));
  for (int s = 0; s < opt.n_speakers; ++s) {
    const Voice v = make_voice(opt.seed, s);
    const std::string spk = name_of(s);
    for (int u = 0; u < opt.n_utts + opt.n_heldout; ++u) {
      Rng rng = derive_rng(opt.seed, {0x757474, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(u)});
      const auto w = make_utterance(v, opt, rng);
      char id[48];
      if (u < opt.n_utts) {
        std::snprintf(id, sizeof id, "%s_u%02d", spk.c_str(), u);
        const auto rel = std::filesystem::path("wav") / (std::string(id) + ".wav");
        data::write_wav(out_dir / rel, w);
        train.push_back({id, spk, rel});
      } else {
        std::snprintf(id, sizeof id, "%s_h%02d.wav", spk.c_str(), u - opt.n_utts);
        const auto rel = std::filesystem::path("heldout") / id;
        data::write_wav(out_dir / rel, w);
        heldout[static_cast<std::size_t>(s)].push_back(rel.generic_string());
      }
    }
  }
  sum.manifest = out_dir / "train.txt";
  data::write_manifest(sum.manifest, train);
  sum.n_train = train.size();
  sum.n_heldout = static_cast<std::size_t>(opt.n_speakers * opt.n_heldout);

  // Every same-speaker pair, then as many distinct cross-speaker pairs.
  data::TrialList targets, nontargets;
  for (const auto& utts : heldout)
    for (std::size_t i = 0; i < utts.size(); ++i)
      for (std::size_t j = i + 1; j < utts.size(); ++j) targets.push_back({true, utts[i], utts[j]});
  Rng rng = derive_rng(opt.seed, {0x747269616c});
  std::set<std::pair<std::string, std::string>> seen;
  const auto n_spk = static_cast<std::int64_t>(opt.n_speakers);
  const auto n_h = static_cast<std::int64_t>(opt.n_heldout);
  while (nontargets.size() < targets.size()) {
    const auto a = uniform_int(rng, 0, n_spk - 1);
    auto b = uniform_int(rng, 0, n_spk - 2);
    if (b >= a) ++b;
    const auto& ea = heldout[static_cast<std::size_t>(a)][static_cast<std::size_t>(uniform_int(rng, 0, n_h - 1))];
    const auto& eb = heldout[static_cast<std::size_t>(b)][static_cast<std::size_t>(uniform_int(rng, 0, n_h - 1))];
    if (!seen.insert(std::minmax(ea, eb)).second) continue;
    nontargets.push_back({false, ea, eb});
  }
  data::TrialList trials;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    trials.push_back(targets[i]);
    trials.push_back(nontargets[i]);
  }
  sum.trials = out_dir / "trials.txt";
  data::write_trials(sum.trials, trials);
  sum.n_target = targets.size();
  sum.n_nontarget = nontargets.size();
  return sum;
}

}  // namespace veriforge::cli
