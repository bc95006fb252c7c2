#include "veriforge/cli/app.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <thread>

#include "veriforge/cli/synth.hpp"
#include "veriforge/config.hpp"
#include "veriforge/data/manifest.hpp"
#include "veriforge/data/trials.hpp"
#include "veriforge/data/wav.hpp"
#include "veriforge/error.hpp"
#include "veriforge/eval/metrics.hpp"
#include "veriforge/eval/scoring.hpp"
#include "veriforge/fusion/fusion.hpp"
#include "veriforge/nn/checkpoint.hpp"
#include "veriforge/nn/ops.hpp"
#include "veriforge/train/trainer.hpp"

namespace veriforge::cli {
namespace {

namespace fs = std::filesystem;

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<long long> seed;
  std::optional<int> workers;
};

int default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw == 0 ? 1u : hw, 1u, 8u));
}

/// File, then --set overrides, then --seed / VERIFORGE_SEED and --workers.
Config resolve_config(const Globals& g) {
  Config cfg = g.config_path.empty() ? Config() : Config::load(g.config_path);
  for (const auto& o : g.overrides) cfg.set_override(o);
  if (g.seed) {
    cfg.set("seed", std::to_string(*g.seed));
  } else if (const char* env = std::getenv("VERIFORGE_SEED"); env && !cfg.has("seed")) {
    cfg.set("seed", env);
  }
  if (g.workers) cfg.set("workers", std::to_string(*g.workers));
  if (!cfg.has("workers")) cfg.set("workers", std::to_string(default_workers()));
  if (!cfg.has("seed")) cfg.set("seed", "0");
  const long long seed = cfg.get_int("seed", 0);
  if (seed < 0) throw UsageError("seed must be >= 0");
  if (cfg.get_int("workers", 1) < 1) throw UsageError("workers must be >= 1");
  return cfg;
}

void print_resolved(std::ostream& err, const std::string& command, const std::map<std::string, std::string>& kv) {
  err << "# " << command << " resolved config\n";
  for (const auto& [k, v] : kv) err << k << " = " << v << '\n';
}

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw DataError(DataError::Kind::kMissingFile, "no such file: " + p.string());
}

fs::path default_root(const std::string& root, const fs::path& trials) {
  if (!root.empty()) return root;
  return trials.has_parent_path() ? trials.parent_path() : fs::path(".");
}

dsp::FrontendConfig frontend_from_checkpoint(const nn::Checkpoint& ck) {
  auto it = ck.config.find("train.features");
  std::string name;
  if (it != ck.config.end()) {
    name = it->second;
  } else {
    auto dim = ck.config.find("input_dim");
    name = dim != ck.config.end() && dim->second == "80" ? "mfcc80" : "logmel64";
  }
  return name == "mfcc80" ? dsp::FrontendConfig::mfcc80() : dsp::FrontendConfig::logmel64();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::kUnwritable, "cannot write " + path.string());
  out << text;
  if (!out) throw DataError(DataError::Kind::kUnwritable, "write failed for " + path.string());
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speaker verification toolkit: features, training, scoring, metrics and fusion.", "veriforge"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "key = value config file");
  app.add_option("--set", g.overrides, "config override key=value (repeatable)");
  app.add_option("--seed", g.seed, "random seed (falls back to VERIFORGE_SEED, then the config)");
  app.add_option("--workers", g.workers, "worker threads (default: cores, at most 8)");

  // prep
  auto* prep = app.add_subcommand("prep", "validate a manifest (and optionally a trial list)");
  std::string prep_manifest, prep_trials, prep_root;
  prep->add_option("--manifest", prep_manifest, "utterance manifest")->required();
  prep->add_option("--trials", prep_trials, "trial list to check against --audio-root");
  prep->add_option("--audio-root", prep_root, "root for trial paths (default: trial list directory)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a speaker embedding model");
  std::string tr_manifest, tr_val, tr_root, tr_out, tr_resume;
  train_cmd->add_option("--manifest", tr_manifest, "training manifest")->required();
  train_cmd->add_option("--val-trials", tr_val, "validation trial list");
  train_cmd->add_option("--audio-root", tr_root, "root for validation trial paths (default: trial list directory)");
  train_cmd->add_option("--out", tr_out, "output directory for checkpoints and logs")->required();
  train_cmd->add_option("--resume", tr_resume, "training checkpoint to continue from");

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "write whole-utterance embeddings");
  std::string em_model, em_manifest, em_audio, em_out;
  embed_cmd->add_option("--model", em_model, "model checkpoint")->required();
  auto* em_m = embed_cmd->add_option("--manifest", em_manifest, "utterances to embed");
  auto* em_a = embed_cmd->add_option("--audio", em_audio, "single wav file to embed");
  em_m->excludes(em_a);
  embed_cmd->add_option("--out", em_out, "output file (default: standard output)");

  // score
  auto* score_cmd = app.add_subcommand("score", "score a trial list with the 10x10 segment protocol");
  std::string sc_model, sc_trials, sc_root, sc_out;
  score_cmd->add_option("--model", sc_model, "model checkpoint")->required();
  score_cmd->add_option("--trials", sc_trials, "trial list")->required();
  score_cmd->add_option("--audio-root", sc_root, "root for trial paths (default: trial list directory)");
  score_cmd->add_option("--out", sc_out, "score file")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "EER and normalized MinDCF of a score file");
  std::string ev_scores, ev_trials;
  eval::DcfParams dcf;
  eval_cmd->add_option("--scores", ev_scores, "score file")->required();
  eval_cmd->add_option("--trials", ev_trials, "trial list")->required();
  eval_cmd->add_option("--p-target", dcf.p_target, "target prior")->capture_default_str();
  eval_cmd->add_option("--c-miss", dcf.c_miss, "miss cost")->capture_default_str();
  eval_cmd->add_option("--c-fa", dcf.c_fa, "false-alarm cost")->capture_default_str();

  // det
  auto* det_cmd = app.add_subcommand("det", "emit DET curves as csv or svg");
  std::vector<std::string> det_scores, det_labels;
  std::string det_trials, det_out;
  det_cmd->add_option("--scores", det_scores, "score file(s); csv output takes exactly one")->required();
  det_cmd->add_option("--trials", det_trials, "trial list")->required();
  det_cmd->add_option("--out", det_out, "curve.csv or curve.svg")->required();
  det_cmd->add_option("--labels", det_labels, "legend labels, one per score file");

  // fuse
  auto* fuse_cmd = app.add_subcommand("fuse", "weighted-average score fusion");
  std::vector<std::string> fu_scores;
  std::string fu_trials, fu_objective = "eer", fu_weights, fu_out;
  bool fu_znorm = false;
  fuse_cmd->add_option("--scores", fu_scores, "score files, one per system")->required();
  fuse_cmd->add_option("--trials", fu_trials, "trial list")->required();
  fuse_cmd->add_option("--objective", fu_objective, "eer or mindcf")->capture_default_str();
  fuse_cmd->add_option("--weights", fu_weights, "fixed weights, e.g. 3,1,0 (skips the search)");
  fuse_cmd->add_flag("--znorm", fu_znorm, "z-normalize each system before fusing");
  fuse_cmd->add_option("--out", fu_out, "write the fused scores here");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate the seeded toy corpus");
  std::string sy_out;
  SynthOptions so;
  synth_cmd->add_option("--out", sy_out, "output directory")->required();
  synth_cmd->add_option("--speakers", so.n_speakers, "number of speakers")->capture_default_str();
  synth_cmd->add_option("--utts", so.n_utts, "training utterances per speaker")->capture_default_str();
  synth_cmd->add_option("--heldout", so.n_heldout, "held-out utterances per speaker")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    const Config cfg = resolve_config(g);
    const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    const int workers = static_cast<int>(cfg.get_int("workers", 1));
    nn::set_num_threads(workers);
    std::map<std::string, std::string> shown = {{"seed", std::to_string(seed)}, {"workers", std::to_string(workers)}};

    if (*prep) {
      shown["manifest"] = prep_manifest;
      if (!prep_trials.empty()) shown["trials"] = prep_trials;
      print_resolved(err, "prep", shown);
      require_file(prep_manifest);
      const auto records = data::parse_manifest(prep_manifest);
      double total = 0.0;
      for (const auto& r : records) {
        const auto w = data::load_wav(r.path);
        if (w.sample_rate != data::kDefaultSampleRate) {
          throw DataError(DataError::Kind::kInvalidValue, r.path.string() + " has sample rate " +
                                                              std::to_string(w.sample_rate) + ", expected " +
                                                              std::to_string(data::kDefaultSampleRate));
        }
        total += w.duration_s();
      }
      out << "utterances=" << records.size() << " speakers=" << data::speaker_ids(records).size()
          << " duration_s=" << fixed6(total) << '\n';
      if (!prep_trials.empty()) {
        require_file(prep_trials);
        const auto trials = data::parse_trials(prep_trials);
        const auto root = default_root(prep_root, prep_trials);
        std::size_t targets = 0;
        for (std::size_t i = 0; i < trials.size(); ++i) {
          targets += trials[i].target ? 1 : 0;
          for (const auto* id : {&trials[i].enroll_id, &trials[i].test_id}) {
            if (!fs::exists(root / *id)) {
              throw DataError(DataError::Kind::kMissingFile,
                              "trial line " + std::to_string(i + 1) + ": no such file " + (root / *id).string());
            }
          }
        }
        out << "trials=" << trials.size() << " targets=" << targets << " nontargets=" << trials.size() - targets
            << '\n';
      }
      return kOk;
    }

    if (*train_cmd) {
      const auto tc = train::TrainConfig::from_config(cfg);
      auto resolved = tc.to_map();
      resolved["manifest"] = tr_manifest;
      resolved["out"] = tr_out;
      if (!tr_val.empty()) resolved["val_trials"] = tr_val;
      if (!tr_resume.empty()) resolved["resume"] = tr_resume;
      print_resolved(err, "train", resolved);
      require_file(tr_manifest);
      train::TrainingSet set(data::parse_manifest(tr_manifest));
      std::optional<train::ValidationSet> val;
      if (!tr_val.empty()) {
        require_file(tr_val);
        val = train::ValidationSet{data::parse_trials(tr_val), default_root(tr_root, tr_val)};
      }
      train::Trainer trainer(tc, set);
      if (!tr_resume.empty()) {
        require_file(tr_resume);
        trainer.resume(tr_resume);
      }
      const auto res = train::fit(trainer, val, tr_out, &err);
      out << "steps=" << res.steps;
      if (!std::isnan(res.best_eer)) out << " best_val_eer=" << fixed6(res.best_eer);
      out << " checkpoint=" << res.final_checkpoint.string() << '\n';
      return kOk;
    }

    if (*embed_cmd) {
      shown["model"] = em_model;
      shown[em_manifest.empty() ? "audio" : "manifest"] = em_manifest.empty() ? em_audio : em_manifest;
      print_resolved(err, "embed", shown);
      if (em_manifest.empty() && em_audio.empty()) throw UsageError("embed needs --manifest or --audio");
      require_file(em_model);
      const auto ck = nn::load_checkpoint(em_model);
      const auto model = nn::model_from_checkpoint(ck);
      const dsp::Frontend frontend(frontend_from_checkpoint(ck));
      std::vector<std::pair<std::string, fs::path>> items;
      if (!em_manifest.empty()) {
        require_file(em_manifest);
        for (const auto& r : data::parse_manifest(em_manifest)) items.emplace_back(r.utterance_id, r.path);
      } else {
        require_file(em_audio);
        items.emplace_back(fs::path(em_audio).stem().string(), em_audio);
      }
      std::string text;
      char buf[40];
      for (const auto& [id, path] : items) {
        const auto e = model->embed_batch({frontend(data::load_wav(path))});
        text += id;
        for (double v : e.values()) {
          std::snprintf(buf, sizeof buf, " %.9g", v);
          text += buf;
        }
        text += '\n';
      }
      if (em_out.empty()) {
        out << text;
      } else {
        write_text(em_out, text);
      }
      return kOk;
    }

    if (*score_cmd) {
      const auto root = default_root(sc_root, sc_trials);
      shown["model"] = sc_model;
      shown["trials"] = sc_trials;
      shown["audio_root"] = root.string();
      shown["out"] = sc_out;
      print_resolved(err, "score", shown);
      require_file(sc_model);
      require_file(sc_trials);
      const auto ck = nn::load_checkpoint(sc_model);
      const auto model = nn::model_from_checkpoint(ck);
      const auto trials = data::parse_trials(sc_trials);
      const eval::ModelEmbedder embedder(*model, frontend_from_checkpoint(ck));
      eval::ScoringStats stats;
      const auto scores = eval::score_trials(embedder, trials, root, workers, &stats);
      data::write_scores(sc_out, scores);
      out << "trials=" << scores.size() << " utterances=" << stats.embed_calls << '\n';
      return kOk;
    }

    if (*eval_cmd) {
      shown["scores"] = ev_scores;
      shown["trials"] = ev_trials;
      shown["p_target"] = std::to_string(dcf.p_target);
      shown["c_miss"] = std::to_string(dcf.c_miss);
      shown["c_fa"] = std::to_string(dcf.c_fa);
      print_resolved(err, "eval", shown);
      require_file(ev_scores);
      require_file(ev_trials);
      const auto scores = data::parse_scores(ev_scores);
      const auto trials = data::parse_trials(ev_trials);
      out << "EER=" << fixed6(eval::eer(scores, trials)) << " MinDCF=" << fixed6(eval::min_dcf(scores, trials, dcf))
          << '\n';
      return kOk;
    }

    if (*det_cmd) {
      shown["trials"] = det_trials;
      shown["out"] = det_out;
      for (std::size_t i = 0; i < det_scores.size(); ++i) shown["scores." + std::to_string(i + 1)] = det_scores[i];
      print_resolved(err, "det", shown);
      const auto format = eval::det_format_for(det_out);
      if (!det_labels.empty() && det_labels.size() != det_scores.size()) {
        throw UsageError("--labels needs one label per score file");
      }
      require_file(det_trials);
      const auto trials = data::parse_trials(det_trials);
      std::vector<eval::DetCurve> curves;
      for (std::size_t i = 0; i < det_scores.size(); ++i) {
        require_file(det_scores[i]);
        const std::string label = det_labels.empty() ? fs::path(det_scores[i]).stem().string() : det_labels[i];
        curves.push_back(eval::det_points(data::parse_scores(det_scores[i]), trials, label));
      }
      eval::emit_det(curves, det_out, format);
      out << "points=" << curves.front().points.size() << " out=" << det_out << '\n';
      return kOk;
    }

    if (*fuse_cmd) {
      shown["trials"] = fu_trials;
      shown["objective"] = fu_objective;
      shown["znorm"] = fu_znorm ? "true" : "false";
      if (!fu_weights.empty()) shown["weights"] = fu_weights;
      for (std::size_t i = 0; i < fu_scores.size(); ++i) shown["scores." + std::to_string(i + 1)] = fu_scores[i];
      print_resolved(err, "fuse", shown);
      const auto objective = fusion::parse_objective(fu_objective);
      require_file(fu_trials);
      const auto trials = data::parse_trials(fu_trials);
      std::vector<data::ScoreSet> systems;
      for (const auto& p : fu_scores) {
        require_file(p);
        systems.push_back(data::parse_scores(p));
        data::check_alignment(systems.back(), trials);
      }
      fusion::FusionResult res;
      if (!fu_weights.empty()) {
        res.weights = fusion::parse_weights(fu_weights);
        res.value = fusion::objective_value(fusion::fuse_scores(systems, res.weights, fu_znorm), trials, objective);
      } else {
        res = fusion::search_weights(systems, trials, objective, fu_znorm);
      }
      if (!fu_out.empty()) data::write_scores(fu_out, fusion::fuse_scores(systems, res.weights, fu_znorm));
      out << "weights=" << fusion::format_weights(res.weights) << ' '
          << (objective == fusion::Objective::kEer ? "EER=" : "MinDCF=") << fixed6(res.value) << '\n';
      return kOk;
    }

    if (*synth_cmd) {
      so.seed = seed;
      shown["out"] = sy_out;
      shown["speakers"] = std::to_string(so.n_speakers);
      shown["utts"] = std::to_string(so.n_utts);
      shown["heldout"] = std::to_string(so.n_heldout);
      print_resolved(err, "synth", shown);
      const auto s = synth_corpus(sy_out, so);
      out << "manifest=" << s.manifest.string() << " utterances=" << s.n_train << " trials=" << s.trials.string()
          << " targets=" << s.n_target << " nontargets=" << s.n_nontarget << '\n';
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  }
  err << app.help();
  return kUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"veriforge"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace veriforge::cli
