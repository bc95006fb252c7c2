#include "veriforge/nn/model.hpp"

#include <cmath>

#include "veriforge/error.hpp"

namespace veriforge::nn {
namespace {

struct ResnetLayout {
  std::vector<int> widths;
  int conv1_stride;
  bool mean_over_frequency;
  int attention_hidden;  // 0: same as pooled channels
};

// Q: quarter-width ResNet-34 with a strided stem, frequency averaged before SAP.
// H: half-width with the stem stride removed, frequency folded into channels before ASP.
ResnetLayout layout_for(TrunkFamily f) {
  if (f == TrunkFamily::kResnetQSap) return {{16, 32, 64, 128}, 2, true, 0};
  return {{32, 64, 128, 256}, 1, false, 128};
}

constexpr int kBlocksPerStage[4] = {3, 4, 6, 3};
constexpr int kStageStride[4] = {1, 2, 2, 2};
constexpr int kTdnnBase = 512;
constexpr int kTdnnKernel[3] = {5, 3, 3};
constexpr int kTdnnDilation[3] = {1, 2, 3};
constexpr int kAspHiddenBase = 128;

int conv_out(int n, int stride) { return (n - 1) / stride + 1; }

}  // namespace

std::string to_string(TrunkFamily f) {
  switch (f) {
    case TrunkFamily::kResnetQSap: return "resnet_q_sap";
    case TrunkFamily::kResnetHAsp: return "resnet_h_asp";
    case TrunkFamily::kTdnnLite: return "tdnn_lite";
  }
  return "?";
}

TrunkFamily parse_trunk_family(const std::string& s) {
  if (s == "resnet_q_sap") return TrunkFamily::kResnetQSap;
  if (s == "resnet_h_asp") return TrunkFamily::kResnetHAsp;
  if (s == "tdnn_lite") return TrunkFamily::kTdnnLite;
  throw UsageError("unknown trunk family '" + s + "' (expected resnet_q_sap, resnet_h_asp or tdnn_lite)");
}

std::string to_string(PoolingKind p) { return p == PoolingKind::kAsp ? "asp" : "sap"; }

PoolingKind parse_pooling(const std::string& s) {
  if (s == "sap" || s == "SAP") return PoolingKind::kSap;
  if (s == "asp" || s == "ASP") return PoolingKind::kAsp;
  throw UsageError("unknown pooling '" + s + "' (expected sap or asp)");
}

int scaled(int base, double scale) { return std::max(1, static_cast<int>(std::lround(base * scale))); }

TrunkConfig TrunkConfig::for_family(TrunkFamily family, double channel_scale) {
  TrunkConfig c;
  c.family = family;
  c.channel_scale = channel_scale;
  c.pooling = family == TrunkFamily::kResnetQSap ? PoolingKind::kSap : PoolingKind::kAsp;
  c.input_dim = family == TrunkFamily::kTdnnLite ? 80 : 64;
  return c;
}

void TrunkConfig::validate() const {
  if (embedding_dim < 1) throw UsageError("embedding_dim must be >= 1");
  if (!(channel_scale > 0.0) || !std::isfinite(channel_scale)) throw UsageError("channel_scale must be > 0");
  if (family == TrunkFamily::kTdnnLite && input_dim != 80) {
    throw UsageError("tdnn_lite requires input_dim 80, got " + std::to_string(input_dim));
  }
  if (family != TrunkFamily::kTdnnLite && input_dim != 64) {
    throw UsageError(to_string(family) + " requires input_dim 64, got " + std::to_string(input_dim));
  }
}

std::map<std::string, std::string> TrunkConfig::to_map() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", channel_scale);
  return {{"trunk", to_string(family)},
          {"channel_scale", buf},
          {"embedding_dim", std::to_string(embedding_dim)},
          {"pooling", to_string(pooling)},
          {"embedding_bn", batchnorm_after_embedding ? "true" : "false"},
          {"input_dim", std::to_string(input_dim)}};
}

TrunkConfig TrunkConfig::from_map(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError(DataError::Kind::kMalformedHeader, "trunk config lacks '" + k + "'");
    return it->second;
  };
  TrunkConfig c;
  try {
    c.family = parse_trunk_family(get("trunk"));
    c.channel_scale = std::stod(get("channel_scale"));
    c.embedding_dim = std::stoi(get("embedding_dim"));
    c.pooling = parse_pooling(get("pooling"));
    c.batchnorm_after_embedding = get("embedding_bn") == "true";
    c.input_dim = std::stoi(get("input_dim"));
  } catch (const std::logic_error& e) {
    throw DataError(DataError::Kind::kMalformedHeader, std::string("bad trunk config: ") + e.what());
  }
  return c;
}

SpeakerModel::SpeakerModel(const TrunkConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const double s = config_.channel_scale;
  int pooled = 0;
  if (config_.family == TrunkFamily::kTdnnLite) {
    const int width = scaled(kTdnnBase, s);
    int in = config_.input_dim;
    for (int i = 0; i < 3; ++i) {
      const std::string name = "tdnn" + std::to_string(i + 1);
      tdnn_.emplace_back(store_, name, in, width, kTdnnKernel[i], kTdnnDilation[i], rng);
      tdnn_bn_.emplace_back(store_, name + ".bn", width);
      in = width;
    }
    pooled = width;
  } else {
    const auto lay = layout_for(config_.family);
    const int w0 = scaled(lay.widths[0], s);
    conv1_ = Conv2d(store_, "conv1", 1, w0, 3, lay.conv1_stride, lay.conv1_stride, rng);
    bn1_ = BatchNorm(store_, "bn1", w0);
    int in = w0;
    int freq = conv_out(config_.input_dim, lay.conv1_stride);
    for (int stage = 0; stage < 4; ++stage) {
      const int out = scaled(lay.widths[stage], s);
      for (int b = 0; b < kBlocksPerStage[stage]; ++b) {
        const int stride = b == 0 ? kStageStride[stage] : 1;
        blocks_.emplace_back(store_, "layer" + std::to_string(stage + 1) + "." + std::to_string(b), in, out, stride,
                             rng);
        freq = conv_out(freq, stride);
        in = out;
      }
    }
    pooled = lay.mean_over_frequency ? in : in * freq;
  }
  int hidden = pooled;
  if (config_.pooling == PoolingKind::kAsp) hidden = scaled(kAspHiddenBase, s);
  pool_ = AttentivePooling(store_, "pool", config_.pooling, pooled, hidden, rng);
  embed_ = Linear(store_, "embedding", pool_.output_dim(), config_.embedding_dim, true, rng);
  if (config_.batchnorm_after_embedding) embed_bn_ = BatchNorm(store_, "embedding_bn", config_.embedding_dim);
}

Var SpeakerModel::resnet_frames(const Var& x, bool training) const {
  const auto& sh = x.shape();
  // [B, T, D] -> [B, 1, D, T]: frequency on the H axis, time on W.
  Var y = reshape(permute(x, {0, 2, 1}), {sh[0], 1, sh[2], sh[1]});
  y = relu(bn1_.forward(conv1_.forward(y), training));
  for (const auto& block : blocks_) y = block.forward(y, training);
  const auto B = y.shape()[0], C = y.shape()[1], F = y.shape()[2], T = y.shape()[3];
  if (layout_for(config_.family).mean_over_frequency) {
    return permute(mean(y, 2), {0, 2, 1});  // [B, T', C]
  }
  return reshape(permute(y, {0, 3, 1, 2}), {B, T, C * F});
}

Var SpeakerModel::tdnn_frames(const Var& x, bool training) const {
  Var y = permute(x, {0, 2, 1});  // [B, D, T]
  for (std::size_t i = 0; i < tdnn_.size(); ++i) y = tdnn_bn_[i].forward(relu(tdnn_[i].forward(y)), training);
  return permute(y, {0, 2, 1});
}

Var SpeakerModel::forward(const Var& features, bool training) const {
  const auto& sh = features.shape();
  if (sh.size() != 3 || sh[2] != config_.input_dim) {
    throw UsageError("model expects features [B, T, " + std::to_string(config_.input_dim) + "], got " +
                     shape_str(sh));
  }
  Var frames = config_.family == TrunkFamily::kTdnnLite ? tdnn_frames(features, training)
                                                         : resnet_frames(features, training);
  Var e = embed_.forward(pool_.forward(frames));
  if (config_.batchnorm_after_embedding) e = embed_bn_.forward(e, training);
  return e;
}

Tensor stack_features(const std::vector<dsp::FeatureMatrix>& features) {
  if (features.empty()) throw UsageError("empty feature batch");
  const auto T = features.front().frames;
  const auto D = features.front().dims;
  Tensor out({static_cast<std::int64_t>(features.size()), static_cast<std::int64_t>(T), static_cast<std::int64_t>(D)});
  for (std::size_t b = 0; b < features.size(); ++b) {
    const auto& f = features[b];
    if (f.frames != T || f.dims != D) {
      throw UsageError("feature batch mixes shapes: " + std::to_string(T) + "x" + std::to_string(D) + " vs " +
                       std::to_string(f.frames) + "x" + std::to_string(f.dims));
    }
    std::copy(f.values.begin(), f.values.end(), out.data() + b * T * D);
  }
  return out;
}

Tensor SpeakerModel::embed_batch(const std::vector<dsp::FeatureMatrix>& features) const {
  NoGradGuard guard;
  return forward(constant(stack_features(features)), false).value();
}

}  // namespace veriforge::nn
