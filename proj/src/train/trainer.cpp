#include "veriforge/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "veriforge/error.hpp"
#include "veriforge/eval/metrics.hpp"
#include "veriforge/eval/scoring.hpp"
#include "veriforge/nn/checkpoint.hpp"
#include "veriforge/nn/ops.hpp"

namespace veriforge::train {
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

dsp::FrontendConfig frontend_named(const std::string& name) {
  if (name == "logmel64") return dsp::FrontendConfig::logmel64();
  if (name == "mfcc80") return dsp::FrontendConfig::mfcc80();
  throw UsageError("unknown features '" + name + "' (expected logmel64 or mfcc80)");
}

constexpr const char* kEpochKey = "state.epoch";
constexpr const char* kStepKey = "state.step";

}  // namespace

const std::vector<std::string>& TrainConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "trunk",          "channel_scale",     "embedding_dim",  "pooling",
      "embedding_bn",   "features",          "loss",           "margin",
      "scale",          "batch_size",        "metric_batch_size", "metric_batches_per_epoch",
      "segment_s",      "ap_distinct_utterances", "epochs",    "lr",
      "lr_decay",       "lr_decay_every",    "weight_decay",   "augment",
      "noise_manifest", "rir_manifest",      "seed",           "workers",
      "val_every"};
  return keys;
}

TrainConfig TrainConfig::from_config(const Config& cfg) {
  const auto unknown = cfg.unknown_keys(known_keys());
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    throw UsageError("unknown config key(s): " + list);
  }
  TrainConfig c;
  const auto family = nn::parse_trunk_family(cfg.get_string("trunk", "resnet_q_sap"));
  c.trunk = nn::TrunkConfig::for_family(family, cfg.get_double("channel_scale", 0.125));
  c.trunk.embedding_dim = static_cast<int>(cfg.get_int("embedding_dim", c.trunk.embedding_dim));
  if (cfg.has("pooling")) c.trunk.pooling = nn::parse_pooling(cfg.get_string("pooling", "sap"));
  c.trunk.batchnorm_after_embedding = cfg.get_bool("embedding_bn", false);
  c.frontend = frontend_named(cfg.get_string("features", family == nn::TrunkFamily::kTdnnLite ? "mfcc80" : "logmel64"));
  c.trunk.input_dim = static_cast<int>(c.frontend.feature_dim());
  c.loss = losses::parse_loss_kind(cfg.get_string("loss", "aamsoftmax"));
  c.margin.margin = cfg.get_double("margin", c.margin.margin);
  c.margin.scale = cfg.get_double("scale", c.margin.scale);
  c.batch_size = static_cast<int>(cfg.get_int("batch_size", c.batch_size));
  c.metric_batch_size = static_cast<int>(cfg.get_int("metric_batch_size", c.metric_batch_size));
  c.metric_batches_per_epoch = static_cast<int>(cfg.get_int("metric_batches_per_epoch", 0));
  c.segment_s = cfg.get_double("segment_s", c.segment_s);
  c.ap_distinct_utterances = cfg.get_bool("ap_distinct_utterances", true);
  c.schedule = SchedulePolicy::for_family(family);
  c.schedule.total_epochs = static_cast<int>(cfg.get_int("epochs", 20));
  c.schedule.initial_lr = cfg.get_double("lr", c.schedule.initial_lr);
  c.schedule.decay_fraction = cfg.get_double("lr_decay", c.schedule.decay_fraction);
  c.schedule.decay_every = static_cast<int>(cfg.get_int("lr_decay_every", c.schedule.decay_every));
  c.weight_decay = cfg.get_double("weight_decay", c.weight_decay);
  c.augment = cfg.get_bool("augment", false);
  c.noise_manifest = cfg.get_string("noise_manifest", "");
  c.rir_manifest = cfg.get_string("rir_manifest", "");
  const auto seed = cfg.get_int("seed", 0);
  if (seed < 0) throw UsageError("seed must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.workers = static_cast<int>(cfg.get_int("workers", 1));
  c.val_every = static_cast<int>(cfg.get_int("val_every", 1));
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  trunk.validate();
  margin.validate();
  schedule.validate();
  if (batch_size < 2) throw UsageError("batch_size must be >= 2");
  if (metric_batch_size < 2) throw UsageError("metric_batch_size must be >= 2");
  if (metric_batches_per_epoch < 0) throw UsageError("metric_batches_per_epoch must be >= 0");
  if (!(segment_s > 0.0)) throw UsageError("segment_s must be > 0");
  if (!(weight_decay >= 0.0)) throw UsageError("weight_decay must be >= 0");
  if (workers < 1) throw UsageError("workers must be >= 1");
  if (val_every < 0) throw UsageError("val_every must be >= 0");
  if (static_cast<int>(frontend.feature_dim()) != trunk.input_dim) {
    throw UsageError("features give " + std::to_string(frontend.feature_dim()) + " dims, trunk expects " +
                     std::to_string(trunk.input_dim));
  }
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> m = {
      {"trunk", nn::to_string(trunk.family)},
      {"channel_scale", fmt(trunk.channel_scale)},
      {"embedding_dim", std::to_string(trunk.embedding_dim)},
      {"pooling", nn::to_string(trunk.pooling)},
      {"embedding_bn", trunk.batchnorm_after_embedding ? "true" : "false"},
      {"features", frontend.kind == dsp::FeatureKind::kMfcc ? "mfcc80" : "logmel64"},
      {"loss", losses::to_string(loss)},
      {"margin", fmt(margin.margin)},
      {"scale", fmt(margin.scale)},
      {"batch_size", std::to_string(batch_size)},
      {"metric_batch_size", std::to_string(metric_batch_size)},
      {"metric_batches_per_epoch", std::to_string(metric_batches_per_epoch)},
      {"segment_s", fmt(segment_s)},
      {"ap_distinct_utterances", ap_distinct_utterances ? "true" : "false"},
      {"epochs", std::to_string(schedule.total_epochs)},
      {"lr", fmt(schedule.initial_lr)},
      {"lr_decay", fmt(schedule.decay_fraction)},
      {"lr_decay_every", std::to_string(schedule.decay_every)},
      {"weight_decay", fmt(weight_decay)},
      {"augment", augment ? "true" : "false"},
      {"noise_manifest", noise_manifest},
      {"rir_manifest", rir_manifest},
      {"seed", std::to_string(seed)},
      {"workers", std::to_string(workers)},
      {"val_every", std::to_string(val_every)},
  };
  return m;
}

Trainer::Trainer(const TrainConfig& config, const TrainingSet& data)
    : config_(config), data_(data), frontend_(config.frontend) {
  config_.validate();
  if (data_.n_speakers() < 2) throw DataError(DataError::Kind::kInvalidValue, "training needs at least 2 speakers");
  if (config_.augment) {
    augment_ = std::make_unique<AugmentSource>();
    if (!config_.noise_manifest.empty()) augment_->noise = augment::load_noise_corpus(config_.noise_manifest);
    if (!config_.rir_manifest.empty()) augment_->rirs = augment::load_rir_set(config_.rir_manifest);
    augment_->policy = augment::restrict_to_available(augment::AugmentPolicy{}, augment_->noise, augment_->rirs);
  }
  Rng init = derive_rng(config_.seed, {0x696e6974});
  model_ = std::make_unique<nn::SpeakerModel>(config_.trunk, init);
  criterion_ = std::make_unique<losses::Criterion>(config_.loss, config_.margin,
                                                   static_cast<int>(data_.n_speakers()), config_.trunk.embedding_dim,
                                                   init);
  const auto params = all_parameters();
  optimizer_ = OptimizerState::for_parameters(params);
}

std::vector<nn::Parameter*> Trainer::all_parameters() {
  auto p = model_->parameters();
  for (auto* q : criterion_->parameters()) p.push_back(q);
  return p;
}

void Trainer::snap_state() {
  for (auto& nt : model_->state()) nn::snap_to_float(*nt.tensor);
  for (auto& nt : criterion_->state()) nn::snap_to_float(*nt.tensor);
  for (auto& t : optimizer_.m) nn::snap_to_float(t);
  for (auto& t : optimizer_.v) nn::snap_to_float(t);
}

void Trainer::train_batch(const Batch& batch, double lr, double& loss_sum, int& steps) {
  nn::Var x = nn::constant(nn::stack_features(batch.features));
  nn::Var emb = model_->forward(x, true);
  nn::Var loss = criterion_->forward(emb, batch.labels);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw NumericError("loss is " + std::to_string(value) + " at epoch " + std::to_string(epoch_) + " step " +
                       std::to_string(optimizer_.step + 1));
  }
  loss.backward();
  const auto params = all_parameters();
  adam_step(params, optimizer_, lr, config_.weight_decay);
  criterion_->after_step();
  snap_state();
  loss_sum += value;
  ++steps;
  if (on_step) on_step(epoch_, steps - 1, value);
}

EpochLog Trainer::run_epoch() {
  nn::set_num_threads(config_.workers);
  EpochLog log;
  log.epoch = epoch_;
  log.lr = schedule_lr(config_.schedule, epoch_);
  double loss_sum = 0.0;
  const auto e = static_cast<std::uint64_t>(epoch_);
  if (!losses::is_metric(config_.loss)) {
    // One segment per utterance, in a per-epoch shuffled order.
    std::vector<std::size_t> order(data_.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = derive_rng(config_.seed, {e});
    std::shuffle(order.begin(), order.end(), shuffle);
    const auto bs = static_cast<std::size_t>(config_.batch_size);
    for (std::size_t start = 0, b = 0; start < order.size(); start += bs, ++b) {
      const std::size_t end = std::min(order.size(), start + bs);
      if (end - start < 2) break;  // batch statistics need two rows
      std::vector<std::size_t> utts(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      Rng rng = derive_rng(config_.seed, {e, b + 1});
      const Batch batch = classification_batch(data_, utts, config_.segment_s, frontend_, augment_.get(), rng,
                                               config_.workers);
      train_batch(batch, log.lr, loss_sum, log.steps);
    }
  } else {
    BatchSpec spec;
    spec.mode = BatchMode::kMetric;
    spec.size = std::min(config_.metric_batch_size, static_cast<int>(data_.n_speakers()));
    spec.segment_s = config_.segment_s;
    spec.distinct_utterances = config_.ap_distinct_utterances;
    int n_batches = config_.metric_batches_per_epoch;
    if (n_batches == 0) {
      n_batches = std::max(1, static_cast<int>(std::lround(static_cast<double>(data_.size()) / (2.0 * spec.size))));
    }
    for (int b = 0; b < n_batches; ++b) {
      Rng rng = derive_rng(config_.seed, {e, static_cast<std::uint64_t>(b) + 1});
      const Batch batch = sample_batch(spec, data_, frontend_, augment_.get(), rng, config_.workers);
      train_batch(batch, log.lr, loss_sum, log.steps);
    }
  }
  log.mean_loss = log.steps > 0 ? loss_sum / log.steps : 0.0;
  ++epoch_;
  return log;
}

double Trainer::validate(const ValidationSet& val) const {
  eval::ModelEmbedder embedder(*model_, config_.frontend);
  const auto scores = eval::score_trials(embedder, val.trials, val.audio_root, config_.workers);
  return eval::eer(scores, val.trials);
}

void Trainer::save(const std::filesystem::path& path) {
  auto meta = model_->config().to_map();
  for (const auto& [k, v] : config_.to_map()) meta["train." + k] = v;
  meta[kEpochKey] = std::to_string(epoch_);
  meta[kStepKey] = std::to_string(optimizer_.step);
  std::vector<std::pair<std::string, const nn::Tensor*>> tensors;
  for (const auto& nt : model_->state()) tensors.emplace_back(nt.name, nt.tensor);
  for (const auto& nt : criterion_->state()) tensors.emplace_back("loss." + nt.name, nt.tensor);
  const auto params = all_parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    tensors.emplace_back("adam.m." + std::to_string(k), &optimizer_.m[k]);
    tensors.emplace_back("adam.v." + std::to_string(k), &optimizer_.v[k]);
  }
  nn::save_checkpoint(path, meta, tensors);
}

void Trainer::resume(const std::filesystem::path& path) {
  const auto ck = nn::load_checkpoint(path);
  if (nn::TrunkConfig::from_map(ck.config) != config_.trunk) {
    throw DataError(DataError::Kind::kMismatch, path.string() + " was written for a different trunk configuration");
  }
  auto need = [&](const char* key) {
    auto it = ck.config.find(key);
    if (it == ck.config.end()) throw DataError(DataError::Kind::kMismatch, path.string() + " is not a training checkpoint");
    return std::stoll(it->second);
  };
  nn::assign_state(model_->state(), ck);
  std::vector<nn::NamedTensor> rest;
  for (const auto& nt : criterion_->state()) rest.push_back({"loss." + nt.name, nt.tensor});
  for (std::size_t k = 0; k < optimizer_.m.size(); ++k) {
    rest.push_back({"adam.m." + std::to_string(k), &optimizer_.m[k]});
    rest.push_back({"adam.v." + std::to_string(k), &optimizer_.v[k]});
  }
  nn::assign_state(rest, ck);
  epoch_ = static_cast<int>(need(kEpochKey));
  optimizer_.step = need(kStepKey);
}

FitResult fit(Trainer& trainer, const std::optional<ValidationSet>& val, const std::filesystem::path& out_dir,
              std::ostream* progress) {
  std::filesystem::create_directories(out_dir);
  FitResult result;
  const auto& cfg = trainer.config();
  std::ofstream tsv(out_dir / "train_log.tsv", trainer.epoch() == 0 ? std::ios::trunc : std::ios::app);
  if (!tsv) throw DataError(DataError::Kind::kUnwritable, "cannot write " + (out_dir / "train_log.tsv").string());
  if (trainer.epoch() == 0) tsv << "epoch\tlr\tloss\tsteps\tval_eer\n";
  while (trainer.epoch() < cfg.schedule.total_epochs) {
    EpochLog log = trainer.run_epoch();
    const bool validate_now = val && cfg.val_every > 0 &&
                              (trainer.epoch() % cfg.val_every == 0 || trainer.epoch() == cfg.schedule.total_epochs);
    if (validate_now) {
      log.val_eer = trainer.validate(*val);
      trainer.save(out_dir / "last.ckpt");
      if (!(log.val_eer >= result.best_eer)) {
        result.best_eer = log.val_eer;
        trainer.save(out_dir / "best.ckpt");
      }
    }
    char line[160];
    std::snprintf(line, sizeof line, "%d\t%.6g\t%.6f\t%d\t%.6f\n", log.epoch, log.lr, log.mean_loss, log.steps,
                  log.val_eer);
    tsv << line << std::flush;
    if (progress) {
      *progress << "epoch " << log.epoch << " lr " << log.lr << " loss " << log.mean_loss << " steps " << log.steps;
      if (!std::isnan(log.val_eer)) *progress << " val_eer " << log.val_eer;
      *progress << '\n' << std::flush;
    }
    result.log.push_back(log);
  }
  result.final_checkpoint = out_dir / "final.ckpt";
  trainer.save(result.final_checkpoint);
  result.steps = trainer.step();
  return result;
}

}  // namespace veriforge::train
