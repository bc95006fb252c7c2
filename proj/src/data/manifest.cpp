#include "veriforge/data/manifest.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "text_lines.hpp"
#include "veriforge/error.hpp"

namespace veriforge::data {

std::vector<UtteranceRecord> parse_manifest_text(const std::string& text,
                                                 const std::filesystem::path& base_dir) {
  std::vector<UtteranceRecord> records;
  std::unordered_map<std::string, int> first_seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto f = detail::fields_of(line);
    if (f.empty()) continue;
    if (f.size() != 3) {
      throw DataError(DataError::Kind::kMalformedLine,
                      "manifest line " + std::to_string(line_no) + ": expected 3 fields, got " +
                          std::to_string(f.size()));
    }
    auto [it, inserted] = first_seen.emplace(f[0], line_no);
    if (!inserted) {
      throw DataError(DataError::Kind::kDuplicateId,
                      "manifest line " + std::to_string(line_no) + ": duplicate utterance id '" +
                          f[0] + "' (first on line " + std::to_string(it->second) + ")");
    }
    std::filesystem::path p = f[2];
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    records.push_back({f[0], f[1], p});
  }
  return records;
}

std::vector<UtteranceRecord> parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::kMissingFile, "cannot open manifest: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest_text(ss.str(), path.parent_path());
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<UtteranceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::kUnwritable, "cannot write " + path.string());
  for (const auto& r : records) {
    out << r.utterance_id << ' ' << r.speaker_id << ' ' << r.path.generic_string() << '\n';
  }
}

std::vector<std::string> speaker_ids(const std::vector<UtteranceRecord>& records) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (seen.insert(r.speaker_id).second) out.push_back(r.speaker_id);
  }
  return out;
}

}  // namespace veriforge::data
