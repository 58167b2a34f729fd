#include "manifest.hpp"

#include <fstream>

#include "easycore/error.hpp"

namespace easycore::cli {

namespace {

nlohmann::json records_json(const std::vector<FileRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) arr.push_back({{"path", r.path.string()}, {"sha256", r.sha256}});
  return arr;
}

std::vector<FileRecord> records_from(const nlohmann::json& arr) {
  std::vector<FileRecord> out;
  for (const auto& r : arr) out.push_back({r.at("path").get<std::string>(), r.at("sha256").get<std::string>()});
  return out;
}

std::vector<FileRecord> hash_all(const std::vector<std::filesystem::path>& paths) {
  std::vector<FileRecord> out;
  for (const auto& p : paths) out.push_back({p, sha256_file(p)});
  return out;
}

}  // namespace

nlohmann::json RunManifest::to_json() const {
  return {{"run_id", run_id},
          {"seed", seed},
          {"config_digest", config_digest},
          {"subcommand", subcommand},
          {"inputs", records_json(inputs)},
          {"outputs", records_json(outputs)},
          {"wall_time", wall_time},
          {"config", config},
          {"summary", summary}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config_digest = j.at("config_digest").get<std::string>();
  m.subcommand = j.at("subcommand").get<std::string>();
  m.inputs = records_from(j.at("inputs"));
  m.outputs = records_from(j.at("outputs"));
  m.wall_time = j.at("wall_time").get<double>();
  m.config = j.at("config");
  if (j.contains("summary")) m.summary = j.at("summary");
  return m;
}

RunManifest make_manifest(const std::string& subcommand, const RunConfig& config,
                          const std::vector<std::filesystem::path>& inputs,
                          const std::vector<std::filesystem::path>& outputs, double wall_time,
                          nlohmann::json summary) {
  RunManifest m;
  m.seed = config.seed;
  m.config_digest = config.digest();
  m.subcommand = subcommand;
  m.inputs = hash_all(inputs);
  m.outputs = hash_all(outputs);
  m.wall_time = wall_time;
  m.config = config.to_json();
  m.summary = std::move(summary);
  std::string key = subcommand + "|" + m.config_digest;
  for (const auto& r : m.inputs) key += "|" + r.sha256;
  m.run_id = sha256_hex(key).substr(0, 16);
  return m;
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest.to_json().dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  try {
    return RunManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
  }
}

std::vector<std::string> verify_manifest(const RunManifest& manifest, const std::string& subcommand,
                                         const RunConfig& config) {
  std::vector<std::string> problems;
  if (manifest.subcommand != subcommand)
    problems.push_back("manifest was written by '" + manifest.subcommand + "', not '" + subcommand + "'");
  if (sha256_hex(manifest.config.dump()) != manifest.config_digest)
    problems.push_back("recorded config does not hash to the recorded digest");
  if (config.digest() != manifest.config_digest)
    problems.push_back("config digest changed: recorded " + manifest.config_digest + ", now " + config.digest());
  auto check = [&](const std::vector<FileRecord>& records, const char* role) {
    for (const auto& r : records) {
      if (!std::filesystem::exists(r.path)) {
        problems.push_back(std::string(role) + " missing: " + r.path.string());
      } else if (sha256_file(r.path) != r.sha256) {
        problems.push_back(std::string(role) + " changed since the run (stale): " + r.path.string());
      }
    }
  };
  check(manifest.inputs, "input");
  check(manifest.outputs, "output");
  return problems;
}

}  // namespace easycore::cli
