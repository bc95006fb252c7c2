#include "veriforge/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "veriforge/error.hpp"

namespace veriforge::nn {
namespace {

constexpr const char* kMagic = "veriforge-checkpoint";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

DataError malformed(const std::filesystem::path& path, const std::string& what) {
  return DataError(DataError::Kind::kMalformedHeader, path.string() + ": " + what);
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void snap_to_float(Tensor& t) {
  for (auto& v : t.values()) v = static_cast<float>(v);
}

void save_checkpoint(const std::filesystem::path& path, const std::map<std::string, std::string>& config,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::ostringstream head;
  head << kMagic << ' ' << kCheckpointVersion << "\n[config]\n";
  for (const auto& [k, v] : config) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw UsageError("checkpoint config entry '" + k + "' cannot be serialized");
    }
    head << k << '=' << v << '\n';
  }
  head << "[tensors]\n";
  for (const auto& [name, t] : tensors) {
    if (name.find_first_of(" \n") != std::string::npos) throw UsageError("tensor name '" + name + "' has whitespace");
    head << name;
    for (auto d : t->shape()) head << ' ' << d;
    head << '\n';
  }
  head << "[data]\n";

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(DataError::Kind::kUnwritable, "cannot write " + path.string());
    const std::string h = head.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    std::vector<float> buf;
    for (const auto& [name, t] : tensors) {
      buf.assign(t->values().begin(), t->values().end());
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw DataError(DataError::Kind::kUnwritable, "write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError(DataError::Kind::kUnwritable, "cannot write " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::kMissingFile, "cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw malformed(path, "empty file");
  {
    std::istringstream ls(line);
    std::string magic;
    int version = 0;
    if (!(ls >> magic >> version) || magic != kMagic) throw malformed(path, "not a checkpoint");
    if (version != kCheckpointVersion) throw malformed(path, "unsupported checkpoint version " + std::to_string(version));
  }
  if (!std::getline(in, line) || line != "[config]") throw malformed(path, "missing [config] section");
  Checkpoint ck;
  while (std::getline(in, line) && line != "[tensors]") {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw malformed(path, "bad config line '" + line + "'");
    ck.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (line != "[tensors]") throw malformed(path, "missing [tensors] section");
  while (std::getline(in, line) && line != "[data]") {
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    Shape shape;
    std::int64_t d = 0;
    while (ls >> d) {
      if (d < 0) throw malformed(path, "negative extent for " + name);
      shape.push_back(d);
    }
    if (name.empty() || !ls.eof()) throw malformed(path, "bad tensor line '" + line + "'");
    ck.tensors.emplace_back(name, Tensor(shape));
  }
  if (line != "[data]") throw malformed(path, "missing [data] section");
  std::vector<float> buf;
  for (auto& [name, t] : ck.tensors) {
    buf.resize(t.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != buf.size() * sizeof(float)) {
      throw malformed(path, "truncated data for " + name);
    }
    std::copy(buf.begin(), buf.end(), t.data());
  }
  return ck;
}

void assign_state(const std::vector<NamedTensor>& state, const Checkpoint& ckpt) {
  for (const auto& nt : state) {
    const Tensor* src = ckpt.find(nt.name);
    if (!src) throw DataError(DataError::Kind::kMismatch, "checkpoint lacks tensor " + nt.name);
    if (src->shape() != nt.tensor->shape()) {
      throw DataError(DataError::Kind::kMismatch, "checkpoint tensor " + nt.name + " has shape " +
                                                      shape_str(src->shape()) + ", model expects " +
                                                      shape_str(nt.tensor->shape()));
    }
    *nt.tensor = *src;
  }
}

void save_model(const std::filesystem::path& path, SpeakerModel& model) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& nt : model.state()) tensors.emplace_back(nt.name, nt.tensor);
  save_checkpoint(path, model.config().to_map(), tensors);
}

std::unique_ptr<SpeakerModel> model_from_checkpoint(const Checkpoint& ckpt) {
  const TrunkConfig cfg = TrunkConfig::from_map(ckpt.config);
  Rng rng(0);
  auto model = std::make_unique<SpeakerModel>(cfg, rng);
  assign_state(model->state(), ckpt);
  return model;
}

std::unique_ptr<SpeakerModel> load_model(const std::filesystem::path& path) {
  return model_from_checkpoint(load_checkpoint(path));
}

}  // namespace veriforge::nn
