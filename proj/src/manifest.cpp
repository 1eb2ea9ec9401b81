#include "latentdx/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "latentdx/error.hpp"

namespace latentdx {

std::uint64_t file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::string digest_hex(std::uint64_t digest) {
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(digest));
  return out;
}

nlohmann::json RunManifest::to_json() const {
  return {{"tool_version", tool_version}, {"subcommand", subcommand}, {"config", config},
          {"seed", seed},                 {"inputs", inputs},         {"outputs", outputs},
          {"started", started},           {"finished", finished},     {"failed_stage", failed_stage},
          {"warnings", warnings}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.tool_version = j.at("tool_version").get<std::string>();
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = j.at("config");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.started = j.value("started", "");
    m.finished = j.value("finished", "");
    m.failed_stage = j.value("failed_stage", "");
    m.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void RunManifest::save(const std::filesystem::path& directory) const {
  std::ofstream out(directory / kManifestName);
  if (!out) throw DataError("cannot write " + (directory / kManifestName).string());
  out << to_json().dump(2) << "\n";
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> verify_outputs(const RunManifest& manifest, const std::filesystem::path& directory) {
  std::vector<std::string> bad;
  for (const auto& [name, digest] : manifest.outputs) {
    const auto p = directory / name;
    if (!std::filesystem::exists(p) || digest_hex(file_digest(p)) != digest) bad.push_back(name);
  }
  return bad;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace latentdx
