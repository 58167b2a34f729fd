#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "easycore/attack.hpp"
#include "easycore/coreset.hpp"
#include "easycore/data.hpp"

namespace fs = std::filesystem;
using easycore::cli::sha256_hex;

namespace {

const char* kSmallConfig = R"(seed = 3

[dataset]
centers = [[-4.0, 0.0], [4.0, 0.0]]
train_counts = [30, 30]
test_counts = [40, 40]
stds = [1.0, 1.0]
class_of_cluster = [0, 1]

[model]
hidden_dim = 8
num_blocks = 1

[train]
epochs = 3
batch_size = 16
lr = 0.01

[attack]
epsilon = 0.5
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::size_t data_rows(const fs::path& csv) {
  const std::string s = slurp(csv);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')) - 1;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("easycore_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "run.toml") << kSmallConfig;
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Exit status of `easycore <args>`; stderr is kept in dir_/stderr.txt.
  int run(const std::string& args, bool with_config = true) {
    const std::string cmd = std::string(EASYCORE_CLI_PATH) + " " + args +
                            (with_config ? " --config " + (dir_ / "run.toml").string() : "") + " > " +
                            (dir_ / "stdout.txt").string() + " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string err() { return slurp(dir_ / "stderr.txt"); }
  std::string out(const std::string& sub) { return (dir_ / sub).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, ScoreWritesOneNonNegativeScorePerTrainingSample) {
  ASSERT_EQ(run("score --out " + out("s")), 0) << err();
  const auto table = easycore::read_score_csv(dir_ / "s/scores.csv");
  ASSERT_EQ(table.ids.size(), 60u);
  for (double v : table.aign) EXPECT_GE(v, 0.0);
  EXPECT_TRUE(fs::exists(dir_ / "s/model.ezc"));
}

TEST_F(Cli, SingleEpochScoresEqualTheEpochNorms) {
  ASSERT_EQ(run("score --out " + out("s") + " --epochs 1 --trajectory"), 0) << err();
  const auto table = easycore::read_score_csv(dir_ / "s/scores.csv");
  std::istringstream traj(slurp(dir_ / "s/trajectory.csv"));
  std::string line;
  std::getline(traj, line);
  EXPECT_EQ(line, "id,epoch_0");
  for (std::size_t i = 0; std::getline(traj, line); ++i) {
    const auto comma = line.find(',');
    EXPECT_EQ(std::stoul(line.substr(0, comma)), table.ids[i]);
    EXPECT_EQ(std::stod(line.substr(comma + 1)), table.aign[i]);
  }
}

TEST_F(Cli, RerunWithSameSeedIsByteIdentical) {
  ASSERT_EQ(run("score --out " + out("a")), 0) << err();
  ASSERT_EQ(run("score --out " + out("b")), 0) << err();
  EXPECT_EQ(slurp(dir_ / "a/scores.csv"), slurp(dir_ / "b/scores.csv"));
  ASSERT_EQ(run("score --out " + out("c") + " --seed 4"), 0) << err();
  EXPECT_NE(slurp(dir_ / "a/scores.csv"), slurp(dir_ / "c/scores.csv"));
}

TEST_F(Cli, SelectSizesAndUniformReproducibility) {
  ASSERT_EQ(run("score --out " + out("s")), 0) << err();
  const std::string scores = " --scores " + out("s/scores.csv");
  ASSERT_EQ(run("select --out " + out("p") + scores), 0) << err();
  EXPECT_EQ(data_rows(dir_ / "p/selection.csv"), 36u);
  ASSERT_EQ(run("select --out " + out("f") + scores + " --fraction 1"), 0) << err();
  EXPECT_EQ(data_rows(dir_ / "f/selection.csv"), 60u);
  ASSERT_EQ(run("select --out " + out("u1") + scores + " --method uniform --select-seed 9"), 0) << err();
  ASSERT_EQ(run("select --out " + out("u2") + scores + " --method uniform --select-seed 9"), 0) << err();
  EXPECT_EQ(slurp(dir_ / "u1/selection.csv"), slurp(dir_ / "u2/selection.csv"));
  ASSERT_EQ(run("select --out " + out("b") + scores + " --method easycore_balanced"), 0) << err();
  EXPECT_EQ(run("select --out " + out("bad") + scores + " --fraction 0"), 2);
}

TEST_F(Cli, FullSelectionTrainsLikeNoSelection) {
  ASSERT_EQ(run("score --out " + out("s")), 0) << err();
  ASSERT_EQ(run("select --out " + out("f") + " --scores " + out("s/scores.csv") + " --fraction 1"), 0) << err();
  ASSERT_EQ(run("train --out " + out("a")), 0) << err();
  ASSERT_EQ(run("train --out " + out("b") + " --selection " + out("f/selection.csv")), 0) << err();
  EXPECT_EQ(slurp(dir_ / "a/model.ezc"), slurp(dir_ / "b/model.ezc"));
  EXPECT_EQ(slurp(dir_ / "a/train_log.csv"), slurp(dir_ / "b/train_log.csv"));
}

TEST_F(Cli, TradesWithZeroEpsilonMatchesStandard) {
  ASSERT_EQ(run("train --out " + out("std")), 0) << err();
  ASSERT_EQ(run("train --out " + out("tr") + " --mode trades --set trades.epsilon=0"), 0) << err();
  EXPECT_EQ(slurp(dir_ / "std/model.ezc"), slurp(dir_ / "tr/model.ezc"));
}

TEST_F(Cli, EmptySelectionIsRefused) {
  std::ofstream(dir_ / "empty.csv") << "rank,id\n";
  EXPECT_EQ(run("train --out " + out("t") + " --selection " + out("empty.csv")), 2);
  EXPECT_NE(err().find("empty"), std::string::npos);
}

TEST_F(Cli, UnknownSelectionIdIsRefused) {
  std::ofstream(dir_ / "sel.csv") << "rank,id\n0,5\n1,999\n";
  EXPECT_EQ(run("train --out " + out("t") + " --selection " + out("sel.csv")), 2);
}

TEST_F(Cli, AttackZeroEpsilonAndDeterminism) {
  ASSERT_EQ(run("train --out " + out("t")), 0) << err();
  const std::string ck = " --checkpoint " + out("t/model.ezc");
  ASSERT_EQ(run("attack --out " + out("z") + ck + " --epsilon 0"), 0) << err();
  const auto zero = easycore::read_attack_csv(dir_ / "z/attack.csv");
  EXPECT_EQ(zero.overall, zero.clean_accuracy);

  ASSERT_EQ(run("attack --out " + out("a") + ck), 0) << err();
  ASSERT_EQ(run("attack --out " + out("b") + ck), 0) << err();
  EXPECT_EQ(slurp(dir_ / "a/attack.csv"), slurp(dir_ / "b/attack.csv"));
  const auto res = easycore::read_attack_csv(dir_ / "a/attack.csv");
  double mean = 0.0;
  for (auto f : res.adv_correct) mean += f;
  EXPECT_DOUBLE_EQ(mean / static_cast<double>(res.adv_correct.size()), res.overall);
  EXPECT_EQ(res.ids.size(), 80u);
}

TEST_F(Cli, CheckpointConfigMismatchIsValidationError) {
  ASSERT_EQ(run("train --out " + out("t")), 0) << err();
  EXPECT_EQ(run("attack --out " + out("a") + " --checkpoint " + out("t/model.ezc") + " --set model.hidden_dim=9"), 2);
}

TEST_F(Cli, CorruptCheckpointIsRuntimeError) {
  std::ofstream(dir_ / "bad.ezc") << "not a checkpoint";
  EXPECT_EQ(run("attack --out " + out("a") + " --checkpoint " + out("bad.ezc")), 1);
}

TEST_F(Cli, TwoBinCurveAveragesToOverallAccuracy) {
  ASSERT_EQ(run("score --out " + out("s") + " --probe-test"), 0) << err();
  ASSERT_EQ(run("attack --out " + out("a") + " --checkpoint " + out("s/model.ezc") + " --epsilon 2"), 0) << err();
  ASSERT_EQ(run("analyze --kind curve --bins 2 --out " + out("c") + " --scores " + out("s/test_scores.csv") +
                " --attack " + out("a/attack.csv")),
            0)
      << err();
  std::istringstream curve(slurp(dir_ / "c/curve.csv"));
  std::string line;
  std::getline(curve, line);
  double sum = 0.0;
  int bins = 0;
  while (std::getline(curve, line)) {
    sum += std::stod(line.substr(line.find(',') + 1));
    ++bins;
  }
  EXPECT_EQ(bins, 2);
  const auto res = easycore::read_attack_csv(dir_ / "a/attack.csv");
  EXPECT_NEAR(sum / 2.0, res.overall, 1e-12);  // 80 test rows split 40/40
}

TEST_F(Cli, BoundaryRastersShareGridSpec) {
  ASSERT_EQ(run("score --out " + out("s")), 0) << err();
  ASSERT_EQ(run("select --out " + out("p") + " --scores " + out("s/scores.csv")), 0) << err();
  ASSERT_EQ(run("train --out " + out("e") + " --selection " + out("p/selection.csv")), 0) << err();
  const std::string common = "analyze --kind boundary --set analyze.resolution=40";
  ASSERT_EQ(run(common + " --out " + out("b1") + " --checkpoint " + out("s/model.ezc")), 0) << err();
  ASSERT_EQ(run(common + " --out " + out("b2") + " --checkpoint " + out("e/model.ezc") + " --svg"), 0) << err();
  EXPECT_EQ(data_rows(dir_ / "b1/raster.csv"), 1600u);
  const auto grid_of = [](const std::string& csv) {
    const std::string row = csv.substr(csv.find('\n') + 1);
    return row.substr(row.find(','));
  };
  EXPECT_EQ(grid_of(slurp(dir_ / "b1/complexity.csv")), grid_of(slurp(dir_ / "b2/complexity.csv")));
  EXPECT_TRUE(fs::exists(dir_ / "b2/raster.svg"));
}

TEST_F(Cli, OtherAnalysesRun) {
  ASSERT_EQ(run("score --out " + out("s")), 0) << err();
  const std::string ck = " --checkpoint " + out("s/model.ezc");
  ASSERT_EQ(run("analyze --kind kappa --out " + out("k") + ck), 0) << err();
  EXPECT_EQ(slurp(dir_ / "k/kappa.csv").substr(0, 23), "target,kappa,total_dim\n");
  ASSERT_EQ(run("analyze --kind lemma1 --out " + out("l") + ck + " --set analyze.lemma1_batches=5"), 0) << err();
  EXPECT_EQ(data_rows(dir_ / "l/lemma1.csv"), 5u);
  ASSERT_EQ(run("analyze --kind project2d --out " + out("p") + ck + " --split train"), 0) << err();
  EXPECT_EQ(data_rows(dir_ / "p/projection.csv"), 60u);
  ASSERT_EQ(run("analyze --kind histogram --out " + out("h") + " --scores " + out("s/scores.csv")), 0) << err();
  EXPECT_EQ(data_rows(dir_ / "h/histogram.csv"), 30u);
  EXPECT_EQ(run("analyze --kind curve --out " + out("c") + ck), 2);
  EXPECT_EQ(run("analyze --kind spectrum --out " + out("x") + ck), 2);
}

TEST_F(Cli, ManifestRecordsExistingOutputsAndConsistentDigest) {
  ASSERT_EQ(run("score --out " + out("s")), 0) << err();
  const auto m = nlohmann::json::parse(slurp(dir_ / "s/manifest.json"));
  EXPECT_EQ(m.at("subcommand"), "score");
  EXPECT_EQ(m.at("seed"), 3);
  EXPECT_EQ(sha256_hex(m.at("config").dump()), m.at("config_digest").get<std::string>());
  ASSERT_FALSE(m.at("outputs").empty());
  for (const auto& o : m.at("outputs")) {
    ASSERT_TRUE(fs::exists(o.at("path").get<std::string>()));
    EXPECT_EQ(easycore::cli::sha256_file(o.at("path").get<std::string>()), o.at("sha256").get<std::string>());
  }
  EXPECT_EQ(m.at("config").at("train").at("epochs"), 3);
  EXPECT_EQ(m.at("config").at("model").at("hidden_dim"), 8);
}

TEST_F(Cli, VerifyDetectsConfigChangesAndStaleInputs) {
  ASSERT_EQ(run("score --out " + out("s")), 0) << err();
  const std::string sel = "select --out " + out("p") + " --scores " + out("s/scores.csv");
  ASSERT_EQ(run(sel), 0) << err();
  const std::string train = "train --out " + out("t") + " --selection " + out("p/selection.csv");
  ASSERT_EQ(run(train), 0) << err();
  EXPECT_EQ(run(train + " --verify"), 0) << err();
  EXPECT_EQ(run(train + " --set train.lr=0.02 --verify"), 1);
  EXPECT_NE(err().find("config digest changed"), std::string::npos);

  ASSERT_EQ(run(sel + " --fraction 0.5"), 0) << err();
  EXPECT_EQ(run(train + " --verify"), 1);
  EXPECT_NE(err().find("stale"), std::string::npos);
  EXPECT_NE(err().find("selection.csv"), std::string::npos);
}

TEST_F(Cli, ConfigErrorsListEveryViolatedField) {
  std::ofstream(dir_ / "bad.toml") << "[train]\nepochs = -2\nlr = \"fast\"\nwarmup = 3\n[model]\nhidden_dim = 1.5\n";
  EXPECT_EQ(run("train --out " + out("t") + " --config " + out("bad.toml"), false), 2);
  const std::string e = err();
  for (const char* field : {"train.epochs", "train.lr", "train.warmup", "model.hidden_dim"})
    EXPECT_NE(e.find(field), std::string::npos) << field << " missing from:\n" << e;
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("", false), 2);
  EXPECT_EQ(run("frobnicate --out x", false), 2);
  EXPECT_EQ(run("train --out " + out("t") + " --set train.momentum=1.5"), 2);
  EXPECT_EQ(run("generate --out " + out("g")), 0) << err();
  EXPECT_EQ(easycore::load_csv_dataset(dir_ / "g/train.csv").size(), 60u);
  EXPECT_EQ(easycore::load_csv_dataset(dir_ / "g/test.csv").size(), 80u);
}

TEST_F(Cli, CsvDatasetInput) {
  ASSERT_EQ(run("generate --out " + out("g")), 0) << err();
  std::ofstream(dir_ / "csv.toml") << "[dataset]\nkind = \"csv\"\ntrain_path = \"" << out("g/train.csv")
                                    << "\"\ntest_path = \"" << out("g/test.csv")
                                    << "\"\n[model]\nhidden_dim = 8\nnum_blocks = 1\n[train]\nepochs = 2\n";
  EXPECT_EQ(run("score --out " + out("s") + " --config " + out("csv.toml"), false), 0) << err();
  EXPECT_EQ(easycore::read_score_csv(dir_ / "s/scores.csv").ids.size(), 60u);
}
