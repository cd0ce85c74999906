#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace retrobranch {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

/// Sidecar written next to every CLI output.  `fields` values are JSON texts.
struct RunMetadata {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_text;  // canonical, hashed into config_hash
  std::map<std::string, std::string> fields;

  std::string to_json() const;
};

void write_metadata(const RunMetadata& meta, const std::string& path);

}  // namespace retrobranch
