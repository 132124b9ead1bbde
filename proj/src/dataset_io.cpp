#include "selfeval/dataset_io.hpp"

#include <fstream>
#include <functional>

#include "selfeval/errors.hpp"
#include "selfeval/hashing.hpp"

namespace selfeval {

namespace {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int s : shape) {
    if (s <= 0) throw DataError("dataset: non-positive shape entry");
    n *= static_cast<std::size_t>(s);
  }
  return n;
}

template <typename T, typename F>
T parse_with(const std::string& line, const char* what, F&& f) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
    return f(j);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string(what) + ": " + e.what());
  } catch (const ParameterError& e) {
    throw DataError(std::string(what) + ": " + e.what());
  }
}

template <typename R>
std::vector<R> read_all(const std::filesystem::path& path, R (*parse)(const std::string&)) {
  std::vector<R> out;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    try {
      out.push_back(parse(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::string encode_vector(const Vec& v) { return base64_encode(pack_float32_le(std::span<const double>(v))); }

Vec decode_vector(const std::string& b64, std::size_t expected) {
  const auto floats = unpack_float32_le(base64_decode(b64));
  if (floats.size() != expected) {
    throw DataError("image has " + std::to_string(floats.size()) + " values, shape implies " +
                    std::to_string(expected));
  }
  return Vec(floats.begin(), floats.end());
}

nlohmann::ordered_json to_json(const DatasetRecord& r) {
  const auto& ex = r.example;
  nlohmann::ordered_json j;
  j["id"] = ex.id;
  j["task"] = to_string(ex.task);
  j["seed"] = r.seed;
  nlohmann::ordered_json conds = nlohmann::ordered_json::array();
  for (const auto& c : ex.candidates) conds.push_back(c.to_json());
  j["conditions"] = conds;
  j["correctIndex"] = ex.correct_index;
  j["shape"] = ex.image.shape;
  j["image"] = encode_vector(ex.image.pixels);
  j["renderSeed"] = ex.image.render_seed;
  j["configHash"] = r.config_hash;
  return j;
}

DatasetRecord record_from_json(const nlohmann::json& j) {
  DatasetRecord r;
  auto& ex = r.example;
  ex.id = j.at("id").get<std::string>();
  ex.task = task_from_string(j.at("task").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& c : j.at("conditions")) ex.candidates.push_back(Condition::from_json(c));
  ex.correct_index = j.at("correctIndex").get<std::size_t>();
  if (ex.candidates.empty() || ex.correct_index >= ex.candidates.size()) {
    throw DataError("example " + ex.id + ": correctIndex out of range");
  }
  ex.image.condition = ex.candidates[ex.correct_index];
  ex.image.shape = j.at("shape").get<std::vector<int>>();
  ex.image.pixels = decode_vector(j.at("image").get<std::string>(), shape_size(ex.image.shape));
  ex.image.render_seed = j.at("renderSeed").get<std::uint64_t>();
  r.config_hash = j.at("configHash").get<std::string>();
  return r;
}

std::string serialize_record(const DatasetRecord& r) { return to_json(r).dump(); }

DatasetRecord parse_record(const std::string& line) {
  return parse_with<DatasetRecord>(line, "dataset record", [](const nlohmann::json& j) { return record_from_json(j); });
}

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(serialize_record(r));
  write_lines(path, lines);
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) { return read_all(path, &parse_record); }

std::string serialize_pair(const PairRecord& r) {
  const auto& p = r.pair;
  if (p.a.shape != p.b.shape) throw ParameterError("pair " + p.id + ": images differ in shape");
  nlohmann::ordered_json j;
  j["id"] = p.id;
  j["conditionA"] = p.a.condition.to_json();
  j["conditionB"] = p.b.condition.to_json();
  j["shape"] = p.a.shape;
  j["imageA"] = encode_vector(p.a.pixels);
  j["imageB"] = encode_vector(p.b.pixels);
  j["renderSeedA"] = p.a.render_seed;
  j["renderSeedB"] = p.b.render_seed;
  j["configHash"] = r.config_hash;
  return j.dump();
}

PairRecord parse_pair(const std::string& line) {
  return parse_with<PairRecord>(line, "pair record", [](const nlohmann::json& j) {
    PairRecord r;
    auto& p = r.pair;
    p.id = j.at("id").get<std::string>();
    const auto shape = j.at("shape").get<std::vector<int>>();
    const std::size_t n = shape_size(shape);
    p.a = {Condition::from_json(j.at("conditionA")), shape, decode_vector(j.at("imageA").get<std::string>(), n),
           j.at("renderSeedA").get<std::uint64_t>()};
    p.b = {Condition::from_json(j.at("conditionB")), shape, decode_vector(j.at("imageB").get<std::string>(), n),
           j.at("renderSeedB").get<std::uint64_t>()};
    r.config_hash = j.at("configHash").get<std::string>();
    return r;
  });
}

void write_pairs(const std::filesystem::path& path, const std::vector<PairRecord>& records) {
  std::vector<std::string> lines;
  for (const auto& r : records) lines.push_back(serialize_pair(r));
  write_lines(path, lines);
}

std::vector<PairRecord> read_pairs(const std::filesystem::path& path) { return read_all(path, &parse_pair); }

std::string serialize_train(const TrainRecord& r) {
  nlohmann::ordered_json j;
  j["key"] = r.sample.key;
  j["condition"] = r.sample.condition.to_json();
  j["shape"] = r.shape;
  j["image"] = encode_vector(r.sample.x0);
  j["renderSeed"] = r.render_seed;
  j["configHash"] = r.config_hash;
  return j.dump();
}

TrainRecord parse_train(const std::string& line) {
  return parse_with<TrainRecord>(line, "training record", [](const nlohmann::json& j) {
    TrainRecord r;
    r.sample.key = j.at("key").get<std::uint64_t>();
    r.sample.condition = Condition::from_json(j.at("condition"));
    r.shape = j.at("shape").get<std::vector<int>>();
    r.sample.x0 = decode_vector(j.at("image").get<std::string>(), shape_size(r.shape));
    r.render_seed = j.at("renderSeed").get<std::uint64_t>();
    r.config_hash = j.at("configHash").get<std::string>();
    return r;
  });
}

void write_train(const std::filesystem::path& path, const std::vector<TrainRecord>& records) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(serialize_train(r));
  write_lines(path, lines);
}

std::vector<TrainRecord> read_train(const std::filesystem::path& path) { return read_all(path, &parse_train); }

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace selfeval
