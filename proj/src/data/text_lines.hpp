#pragma once

#include <sstream>
#include <string>
#include <vector>

namespace veriforge::data::detail {

/// Whitespace-split fields of a line, after stripping a trailing '#' comment.
inline std::vector<std::string> fields_of(const std::string& line) {
  std::string body = line;
  if (auto hash = body.find('#'); hash != std::string::npos) body.resize(hash);
  std::istringstream in(body);
  std::vector<std::string> out;
  for (std::string f; in >> f;) out.push_back(f);
  return out;
}

}  // namespace veriforge::data::detail
