#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace veriforge::data {

struct UtteranceRecord {
  std::string utterance_id;
  std::string speaker_id;
  std::filesystem::path path;
};

/// Parses `utterance_id speaker_id path` lines. Relative paths are resolved
/// against the manifest's directory. Blank lines and '#' comments are skipped.
std::vector<UtteranceRecord> parse_manifest(const std::filesystem::path& path);

/// Same, but from in-memory text; relative paths resolve against `base_dir`.
std::vector<UtteranceRecord> parse_manifest_text(const std::string& text,
                                                 const std::filesystem::path& base_dir);

void write_manifest(const std::filesystem::path& path,
                    const std::vector<UtteranceRecord>& records);

/// Distinct speaker ids in first-appearance order.
std::vector<std::string> speaker_ids(const std::vector<UtteranceRecord>& records);

}  // namespace veriforge::data
