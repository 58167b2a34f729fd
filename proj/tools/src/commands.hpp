#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace easycore::cli {

struct CommandArgs {
  std::string subcommand;
  std::filesystem::path out_dir;
  bool svg = false;
  std::optional<std::filesystem::path> scores;
  std::optional<std::filesystem::path> selection;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> attack_csv;
  std::optional<std::filesystem::path> data_csv;
  std::string split = "test";
  std::string kind;  // analyze
};

/// Runs one subcommand, writing artifacts and `manifest.json` into args.out_dir.
void run_command(const RunConfig& config, const CommandArgs& args);

/// Checks `manifest.json` in args.out_dir against the resolved config.
/// Returns the problems found; empty means up to date.
std::vector<std::string> verify_command(const RunConfig& config, const CommandArgs& args);

}  // namespace easycore::cli
