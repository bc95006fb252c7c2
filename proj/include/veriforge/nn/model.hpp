#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "veriforge/dsp/features.hpp"
#include "veriforge/nn/layers.hpp"

namespace veriforge::nn {

enum class TrunkFamily { kResnetQSap, kResnetHAsp, kTdnnLite };

std::string to_string(TrunkFamily f);
TrunkFamily parse_trunk_family(const std::string& s);
std::string to_string(PoolingKind p);
PoolingKind parse_pooling(const std::string& s);

struct TrunkConfig {
  TrunkFamily family = TrunkFamily::kResnetQSap;
  double channel_scale = 0.125;
  int embedding_dim = 512;
  PoolingKind pooling = PoolingKind::kSap;
  bool batchnorm_after_embedding = false;
  int input_dim = 64;

  /// Family defaults: Q pairs with SAP on log-mel 64, H with ASP on log-mel 64,
  /// TDNN-lite with ASP on MFCC 80.
  static TrunkConfig for_family(TrunkFamily family, double channel_scale = 0.125);

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static TrunkConfig from_map(const std::map<std::string, std::string>& kv);

  bool operator==(const TrunkConfig&) const = default;
};

/// Channel count after scaling, at least 1.
int scaled(int base, double scale);

/// Frame-level trunk, pooling and embedding layer.
class SpeakerModel {
 public:
  SpeakerModel(const TrunkConfig& config, Rng& rng);
  SpeakerModel(const SpeakerModel&) = delete;
  SpeakerModel& operator=(const SpeakerModel&) = delete;

  /// features [B, T, D] -> embeddings [B, E]. Training mode uses batch statistics
  /// and updates the running ones; eval mode reads only.
  Var forward(const Var& features, bool training) const;

  /// Eval-mode embeddings without graph construction. All matrices must share T and D.
  Tensor embed_batch(const std::vector<dsp::FeatureMatrix>& features) const;

  const TrunkConfig& config() const { return config_; }
  std::vector<Parameter*> parameters() { return store_.parameters(); }
  std::vector<NamedTensor> state() { return store_.state(); }
  std::size_t parameter_count() const { return store_.parameter_count(); }

 private:
  Var resnet_frames(const Var& x, bool training) const;
  Var tdnn_frames(const Var& x, bool training) const;

  TrunkConfig config_;
  ParamStore store_;
  Conv2d conv1_;
  BatchNorm bn1_;
  std::vector<BasicBlock> blocks_;
  std::vector<Conv1d> tdnn_;
  std::vector<BatchNorm> tdnn_bn_;
  AttentivePooling pool_;
  Linear embed_;
  BatchNorm embed_bn_;
};

/// Stacks feature matrices into a [B, T, D] tensor.
Tensor stack_features(const std::vector<dsp::FeatureMatrix>& features);

}  // namespace veriforge::nn
