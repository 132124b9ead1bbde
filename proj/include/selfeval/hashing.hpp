#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace selfeval {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Little-endian float32 packing used by dataset images and weight blobs.
std::vector<std::uint8_t> pack_float32_le(std::span<const double> values);
std::vector<std::uint8_t> pack_float32_le(std::span<const float> values);
std::vector<float> unpack_float32_le(std::span<const std::uint8_t> bytes);

}  // namespace selfeval
