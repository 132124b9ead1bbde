#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfeval/benchmark.hpp"
#include "selfeval/mlp.hpp"

namespace selfeval {

// One ItmExample per JSON line:
// {id, task, seed, conditions, correctIndex, shape, image, renderSeed, configHash}
// with the image as base64 little-endian float32, row-major.
struct DatasetRecord {
  ItmExample example;
  std::uint64_t seed = 0;  // suite seed the example came from
  std::string config_hash;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

nlohmann::ordered_json to_json(const DatasetRecord& r);
DatasetRecord record_from_json(const nlohmann::json& j);

std::string serialize_record(const DatasetRecord& r);
DatasetRecord parse_record(const std::string& line);

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);

// Winoground pairs: {id, conditionA, conditionB, shape, imageA, imageB, renderSeedA, renderSeedB, configHash}.
struct PairRecord {
  ScenePair pair;
  std::string config_hash;
  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

std::string serialize_pair(const PairRecord& r);
PairRecord parse_pair(const std::string& line);
void write_pairs(const std::filesystem::path& path, const std::vector<PairRecord>& records);
std::vector<PairRecord> read_pairs(const std::filesystem::path& path);

// Training samples: {key, condition, shape, image, renderSeed, configHash}.
// x0 is stored in model space.
struct TrainRecord {
  ConditionedSample sample;
  std::vector<int> shape;
  std::uint64_t render_seed = 0;
  std::string config_hash;
};

std::string serialize_train(const TrainRecord& r);
TrainRecord parse_train(const std::string& line);
void write_train(const std::filesystem::path& path, const std::vector<TrainRecord>& records);
std::vector<TrainRecord> read_train(const std::filesystem::path& path);

// Writes lines to path atomically enough for our purposes (tmp + rename).
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);
std::vector<std::string> read_lines(const std::filesystem::path& path);

std::string encode_vector(const Vec& v);
Vec decode_vector(const std::string& b64, std::size_t expected);

}  // namespace selfeval
