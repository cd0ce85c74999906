#include "retrobranch/metadata.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "retrobranch/features.hpp"

namespace retrobranch {

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string RunMetadata::to_json() const {
  nlohmann::ordered_json j;
  j["tool"] = "retrobranch";
  j["version"] = RETROBRANCH_VERSION;
  j["feature_set_version"] = kFeatureSetVersion;
  j["command"] = command;
  j["seed"] = seed;
  j["config_hash"] = "fnv1a64:" + hex64(fnv1a64(config_text));
  j["config"] = config_text;
  for (const auto& [k, v] : fields) j[k] = nlohmann::json::parse(v);
  return j.dump(2) + "\n";
}

void write_metadata(const RunMetadata& meta, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metadata " + path);
  out << meta.to_json();
}

}  // namespace retrobranch
