#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace forge {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

// SHA-256 of a file's bytes, streamed.
std::string sha256_file(const std::filesystem::path& path);

// SHA-256 of the canonical serialization (sorted keys, no whitespace).
std::string json_digest(const nlohmann::json& j);

}  // namespace forge
