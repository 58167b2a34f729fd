#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <sstream>

#include "commands.hpp"
#include "config.hpp"
#include "easycore/error.hpp"
#include "easycore/parallel.hpp"

namespace {

using easycore::cli::CommandArgs;
using easycore::cli::RunConfig;

struct Options {
  std::string config_path;
  std::vector<std::string> assignments;
  std::vector<std::string> flag_assignments;
  bool verify = false;
  CommandArgs args;
};

template <typename T>
void override_flag(CLI::App* app, Options& o, const std::string& flag, const std::string& key, const std::string& help) {
  app->add_option_function<T>(
      flag,
      [&o, key](const T& v) {
        std::ostringstream os;
        if constexpr (std::is_same_v<T, std::string>) os << '"' << v << '"';
        else if constexpr (std::is_same_v<T, double>) os << std::setprecision(17) << std::showpoint << v;
        else os << v;
        o.flag_assignments.push_back(key + "=" + os.str());
      },
      help);
}

CLI::App* add_subcommand(CLI::App& app, Options& o, const std::string& name, const std::string& description) {
  CLI::App* sub = app.add_subcommand(name, description);
  sub->add_option("--config", o.config_path, "TOML config file")->check(CLI::ExistingFile);
  sub->add_option("--out", o.args.out_dir, "output directory")->required();
  sub->add_option("--set", o.assignments, "override, e.g. --set train.epochs=10");
  sub->add_flag("--verify", o.verify, "check the existing manifest instead of running");
  override_flag<std::uint64_t>(sub, o, "--seed", "seed", "top-level seed");
  sub->callback([&o, name] { o.args.subcommand = name; });
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  easycore::tune_allocator();
  CLI::App app{"AIGN hardness scoring, EasyCore coreset selection and robustness analysis"};
  app.require_subcommand(1);
  Options o;

  add_subcommand(app, o, "generate", "write the configured dataset as CSV");

  auto* score = add_subcommand(app, o, "score", "train the scoring model and write per-sample AIGN scores");
  override_flag<std::size_t>(score, o, "--epochs", "train.epochs", "training epochs");
  score->add_flag_function(
      "--probe-test", [&o](std::int64_t) { o.flag_assignments.push_back("score.probe_test=true"); },
      "also score the test split");
  score->add_flag_function(
      "--trajectory", [&o](std::int64_t) { o.flag_assignments.push_back("score.trajectory=true"); },
      "write the per-epoch norm matrix");

  auto* select = add_subcommand(app, o, "select", "select a coreset from a score file");
  select->add_option("--scores", o.args.scores, "score CSV")->check(CLI::ExistingFile);
  override_flag<std::string>(select, o, "--method", "select.method", "easycore, easycore_balanced or uniform");
  override_flag<double>(select, o, "--fraction", "select.fraction", "coreset fraction in (0, 1]");
  override_flag<std::uint64_t>(select, o, "--select-seed", "select.seed", "seed for uniform selection");

  auto* train = add_subcommand(app, o, "train", "train on the full training split or a selection");
  train->add_option("--selection", o.args.selection, "selection CSV")->check(CLI::ExistingFile);
  override_flag<std::string>(train, o, "--mode", "train.mode", "standard or trades");
  override_flag<std::size_t>(train, o, "--epochs", "train.epochs", "training epochs");

  auto* attack = add_subcommand(app, o, "attack", "run PGD against a checkpoint");
  attack->add_option("--checkpoint", o.args.checkpoint, "model checkpoint")->check(CLI::ExistingFile);
  attack->add_option("--split", o.args.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  attack->add_option("--data", o.args.data_csv, "dataset CSV instead of a configured split")->check(CLI::ExistingFile);
  override_flag<double>(attack, o, "--epsilon", "attack.epsilon", "l-infinity radius");
  override_flag<std::size_t>(attack, o, "--steps", "attack.steps", "PGD steps");

  auto* analyze = add_subcommand(app, o, "analyze", "geometric and hardness analyses");
  analyze->add_option("--kind", o.args.kind, "boundary, kappa, curve, lemma1, histogram or project2d")->required();
  analyze->add_option("--checkpoint", o.args.checkpoint, "model checkpoint")->check(CLI::ExistingFile);
  analyze->add_option("--scores", o.args.scores, "score CSV")->check(CLI::ExistingFile);
  analyze->add_option("--attack", o.args.attack_csv, "attack CSV")->check(CLI::ExistingFile);
  analyze->add_option("--split", o.args.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  analyze->add_option("--data", o.args.data_csv, "dataset CSV instead of a configured split")->check(CLI::ExistingFile);
  analyze->add_flag("--svg", o.args.svg, "also write SVG renderings");
  override_flag<std::size_t>(analyze, o, "--bins", "analyze.bins", "hardness curve bins");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig config;
    if (!o.config_path.empty()) config.merge_file(o.config_path);
    std::string override_errors;
    for (const auto* list : {&o.assignments, &o.flag_assignments})
      for (const auto& a : *list) {
        try {
          config.merge_assignment(a);
        } catch (const easycore::ValidationError& e) {
          override_errors += std::string(override_errors.empty() ? "" : "\n") + e.what();
        }
      }
    try {
      config.validate();
    } catch (const easycore::ValidationError& e) {
      override_errors += std::string(override_errors.empty() ? "" : "\n") + e.what();
    }
    if (!override_errors.empty()) throw easycore::ValidationError(override_errors);

    if (o.verify) {
      const auto problems = easycore::cli::verify_command(config, o.args);
      for (const auto& p : problems) std::cerr << "verify: " << p << '\n';
      if (!problems.empty()) return 1;
      std::cout << "verify: manifest up to date\n";
      return 0;
    }
    easycore::cli::run_command(config, o.args);
    return 0;
  } catch (const easycore::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
