#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "veriforge/nn/model.hpp"

namespace veriforge::nn {

/// Layout:
///   veriforge-checkpoint 1
///   [config]      key=value lines
///   [tensors]     `name d0 d1 ...` lines
///   [data]        then float32 little-endian blobs in manifest order
struct Checkpoint {
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

inline constexpr int kCheckpointVersion = 1;

/// Written to a temporary file and renamed, so an existing checkpoint survives a failed write.
void save_checkpoint(const std::filesystem::path& path, const std::map<std::string, std::string>& config,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies matching tensors into `state`. Every entry of `state` must be present with
/// the same shape; extra checkpoint tensors are ignored.
void assign_state(const std::vector<NamedTensor>& state, const Checkpoint& ckpt);

/// Trunk config plus model state only.
void save_model(const std::filesystem::path& path, SpeakerModel& model);
std::unique_ptr<SpeakerModel> load_model(const std::filesystem::path& path);
std::unique_ptr<SpeakerModel> model_from_checkpoint(const Checkpoint& ckpt);

/// Rounds every value to the nearest float32, the precision checkpoints store.
void snap_to_float(Tensor& t);

}  // namespace veriforge::nn
