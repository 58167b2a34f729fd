#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"

namespace easycore::cli {

struct FileRecord {
  std::filesystem::path path;
  std::string sha256;
};

struct RunManifest {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string subcommand;
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;
  double wall_time = 0.0;
  nlohmann::json config;
  nlohmann::json summary = nlohmann::json::object();

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

RunManifest make_manifest(const std::string& subcommand, const RunConfig& config,
                          const std::vector<std::filesystem::path>& inputs,
                          const std::vector<std::filesystem::path>& outputs, double wall_time,
                          nlohmann::json summary);
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

/// Empty when the manifest matches the resolved config and every recorded
/// file still hashes to its recorded digest; otherwise one line per problem.
std::vector<std::string> verify_manifest(const RunManifest& manifest, const std::string& subcommand,
                                         const RunConfig& config);

}  // namespace easycore::cli
