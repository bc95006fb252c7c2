#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "veriforge/config.hpp"
#include "veriforge/data/trials.hpp"
#include "veriforge/losses/losses.hpp"
#include "veriforge/nn/model.hpp"
#include "veriforge/train/batch.hpp"
#include "veriforge/train/optimizer.hpp"

namespace veriforge::train {

/// Everything `fit` needs, resolved from a flat key/value config.
struct TrainConfig {
  nn::TrunkConfig trunk;
  dsp::FrontendConfig frontend = dsp::FrontendConfig::logmel64();
  losses::LossKind loss = losses::LossKind::kAamSoftmax;
  losses::MarginConfig margin;
  int batch_size = 64;         // classification: segments per batch
  int metric_batch_size = 32;  // metric: speakers per batch, clamped to the speaker count
  int metric_batches_per_epoch = 0;  // 0: about n_utterances / (2 * speakers per batch)
  double segment_s = 2.0;
  bool ap_distinct_utterances = true;
  SchedulePolicy schedule;
  double weight_decay = 5e-5;
  bool augment = false;
  std::string noise_manifest;
  std::string rir_manifest;
  std::uint64_t seed = 0;
  int workers = 1;
  int val_every = 1;  // epochs between validations; 0 disables

  static TrainConfig from_config(const Config& cfg);
  static const std::vector<std::string>& known_keys();
  /// Resolved values, as `key = value` entries that from_config accepts back.
  std::map<std::string, std::string> to_map() const;
  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  int steps = 0;
  double val_eer = std::numeric_limits<double>::quiet_NaN();
};

/// Validation trials whose ids are paths under `audio_root`.
struct ValidationSet {
  data::TrialList trials;
  std::filesystem::path audio_root;
};

/// Model, loss parameters and optimizer state with the epoch/step counters.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const TrainingSet& data);

  /// Runs one epoch (the next one) and returns its log entry without validating.
  EpochLog run_epoch();
  /// Held-out EER with the TTA protocol.
  double validate(const ValidationSet& val) const;

  /// Model, loss and optimizer state plus counters; `resume` restores all of them.
  void save(const std::filesystem::path& path);
  void resume(const std::filesystem::path& path);

  int epoch() const { return epoch_; }
  std::int64_t step() const { return optimizer_.step; }
  const TrainConfig& config() const { return config_; }
  nn::SpeakerModel& model() { return *model_; }
  losses::Criterion& criterion() { return *criterion_; }

  /// Called after every optimizer step with (epoch, batch index, loss).
  std::function<void(int, int, double)> on_step;

 private:
  void train_batch(const Batch& batch, double lr, double& loss_sum, int& steps);
  std::vector<nn::Parameter*> all_parameters();
  void snap_state();

  TrainConfig config_;
  const TrainingSet& data_;
  dsp::Frontend frontend_;
  std::unique_ptr<AugmentSource> augment_;
  std::unique_ptr<nn::SpeakerModel> model_;
  std::unique_ptr<losses::Criterion> criterion_;
  OptimizerState optimizer_;
  int epoch_ = 0;
};

struct FitResult {
  std::vector<EpochLog> log;
  std::int64_t steps = 0;
  double best_eer = std::numeric_limits<double>::quiet_NaN();
  std::filesystem::path final_checkpoint;
};

/// Trains to `schedule.total_epochs`. Writes `last.ckpt` at every validation, `best.ckpt`
/// whenever validation EER improves, `final.ckpt` at the end and `train_log.tsv`.
/// A non-finite loss or gradient throws NumericError; checkpoints already written stay.
FitResult fit(Trainer& trainer, const std::optional<ValidationSet>& val, const std::filesystem::path& out_dir,
              std::ostream* progress = nullptr);

}  // namespace veriforge::train
