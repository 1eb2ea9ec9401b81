#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace latentdx {

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr const char* kManifestName = "manifest.json";

/// 64-bit FNV-1a over the file bytes.
std::uint64_t file_digest(const std::filesystem::path& path);
std::string digest_hex(std::uint64_t digest);

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string subcommand;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> digest
  std::map<std::string, std::string> outputs;  // path relative to the run directory -> digest
  std::string started;
  std::string finished;
  std::string failed_stage;  // empty on success
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& directory) const;
  static RunManifest load(const std::filesystem::path& path);
};

/// Outputs whose current digest differs from the recorded one.
std::vector<std::string> verify_outputs(const RunManifest& manifest, const std::filesystem::path& directory);

std::string utc_timestamp();

}  // namespace latentdx
