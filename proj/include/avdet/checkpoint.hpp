#pragma once
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace avdet {

// Single-archive checkpoint: magic, little-endian u32 header length, JSON
// header, then the named arrays as raw little-endian float32 in header order.
void save_checkpoint(
    const std::string& path, const nlohmann::ordered_json& meta,
    const std::vector<std::pair<std::string, const std::vector<double>*>>& arrays);

struct LoadedCheckpoint {
  nlohmann::ordered_json meta;
  std::vector<std::pair<std::string, std::vector<double>>> arrays;

  const std::vector<double>& find(const std::string& name) const;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace avdet
