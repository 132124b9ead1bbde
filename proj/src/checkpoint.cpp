#include "selfeval/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "selfeval/errors.hpp"
#include "selfeval/hashing.hpp"

namespace selfeval {

void save_checkpoint(const std::filesystem::path& path, const MlpDenoiser& model, const NoiseSchedule& sched,
                     const std::string& config_hash, const nlohmann::json& extra) {
  const auto& net = model.net();
  const auto flat = net.flatten();
  const auto blob = pack_float32_le(std::span<const float>(flat));

  nlohmann::ordered_json header;
  header["version"] = kCheckpointVersion;
  nlohmann::ordered_json arch;
  arch["type"] = "mlp";
  arch["dataDim"] = net.shape().data_dim;
  arch["condDim"] = net.shape().cond_dim;
  arch["timeFeatures"] = net.shape().time_features;
  arch["hidden"] = net.shape().hidden;
  arch["activation"] = "silu";
  arch["output"] = "epsilon";
  arch["variance"] = "beta";
  header["arch"] = arch;
  header["schedule"] = sched.to_json();
  header["conditionVocabulary"] = vocabulary();
  header["epochsCompleted"] = model.epochs_completed();
  header["configHash"] = config_hash;
  header["extra"] = extra;
  header["blobBytes"] = blob.size();
  header["blobSha256"] = sha256_hex(blob);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((len >> (8 * i)) & 0xFF));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw DataError("short write to checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " (" + path.string() + ")";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw DataError("not a selfeval checkpoint: bad magic bytes" + where);
  }
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
  if (12 + static_cast<std::size_t>(len) > bytes.size()) throw DataError("checkpoint header truncated" + where);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what() + where);
  }

  try {
    if (header.at("version").get<int>() != kCheckpointVersion) throw DataError("unsupported checkpoint version" + where);
    if (header.at("conditionVocabulary").get<std::vector<std::string>>() != vocabulary()) {
      throw DataError("checkpoint condition vocabulary differs from this build" + where);
    }
    const auto& arch = header.at("arch");
    if (arch.at("type").get<std::string>() != "mlp") throw DataError("unknown checkpoint architecture" + where);
    MlpShape shape;
    shape.data_dim = arch.at("dataDim").get<std::size_t>();
    shape.cond_dim = arch.at("condDim").get<std::size_t>();
    shape.time_features = arch.at("timeFeatures").get<std::size_t>();
    shape.hidden = arch.at("hidden").get<std::vector<std::size_t>>();
    if (shape.cond_dim != kEmbeddingDim) throw DataError("checkpoint condition embedding size mismatch" + where);

    const std::span<const std::uint8_t> blob(bytes.data() + 12 + len, bytes.size() - 12 - len);
    if (blob.size() != header.at("blobBytes").get<std::size_t>()) throw DataError("checkpoint blob truncated" + where);
    if (sha256_hex(blob) != header.at("blobSha256").get<std::string>()) {
      throw DataError("checkpoint blob digest mismatch" + where);
    }
    MlpNet<float> net(shape, 0);
    const auto flat = unpack_float32_le(blob);
    net.unflatten(flat);

    LoadedCheckpoint out{std::make_shared<MlpDenoiser>(std::move(net), header.at("epochsCompleted").get<int>()),
                         NoiseSchedule::from_json(header.at("schedule")),
                         header.at("configHash").get<std::string>(), header};
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what() + where);
  } catch (const ParameterError& e) {
    throw DataError(std::string("checkpoint: ") + e.what() + where);
  }
}

}  // namespace selfeval
