#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "selfeval/mlp.hpp"
#include "selfeval/schedule.hpp"

namespace selfeval {

// On-disk layout: 8-byte magic "SLFEVCK1", uint32 little-endian header
// length, JSON header, then the float32 little-endian weight blob.
inline constexpr char kCheckpointMagic[8] = {'S', 'L', 'F', 'E', 'V', 'C', 'K', '1'};
inline constexpr int kCheckpointVersion = 1;

struct LoadedCheckpoint {
  std::shared_ptr<MlpDenoiser> model;
  NoiseSchedule schedule;
  std::string config_hash;
  nlohmann::json header;
};

void save_checkpoint(const std::filesystem::path& path, const MlpDenoiser& model, const NoiseSchedule& sched,
                     const std::string& config_hash, const nlohmann::json& extra = nlohmann::json::object());

// Validates magic, version, vocabulary, blob size and blob digest before
// constructing anything; throws DataError on any mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace selfeval
