#include "config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "easycore/coreset.hpp"
#include "easycore/error.hpp"
#include "easycore/rng.hpp"

namespace easycore::cli {

namespace {

class SectionReader {
 public:
  SectionReader(const toml::table* table, std::string section, std::vector<std::string>& errors)
      : table_(table), section_(std::move(section)), errors_(errors) {}

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!table_) return;
    const toml::node* node = table_->get(key);
    if (!node) return;
    if (!assign(*node, out)) errors_.push_back(path(key) + ": expected " + expected<T>());
  }

  void finish() {
    if (!table_) return;
    for (const auto& [k, v] : *table_)
      if (!seen_.count(std::string(k.str()))) errors_.push_back(path(std::string(k.str())) + ": unknown key");
  }

 private:
  std::string path(const std::string& key) const { return section_.empty() ? key : section_ + "." + key; }

  static bool assign(const toml::node& n, std::size_t& out) {
    auto v = n.value_exact<std::int64_t>();
    if (!v || *v < 0) return false;
    out = static_cast<std::size_t>(*v);
    return true;
  }
  static bool assign(const toml::node& n, double& out) {
    if (auto v = n.value_exact<double>()) return out = *v, true;
    if (auto v = n.value_exact<std::int64_t>()) return out = static_cast<double>(*v), true;
    return false;
  }
  static bool assign(const toml::node& n, bool& out) {
    auto v = n.value_exact<bool>();
    if (!v) return false;
    out = *v;
    return true;
  }
  static bool assign(const toml::node& n, std::string& out) {
    auto v = n.value_exact<std::string>();
    if (!v) return false;
    out = *v;
    return true;
  }
  template <typename T>
  static bool assign(const toml::node& n, std::optional<T>& out) {
    T v{};
    if (!assign(n, v)) return false;
    out = v;
    return true;
  }
  static bool assign(const toml::node& n, SchedulerKind& out) {
    std::string s;
    if (!assign(n, s)) return false;
    try {
      out = parse_scheduler_kind(s);
    } catch (const Error&) {
      return false;
    }
    return true;
  }
  template <typename T>
  static bool assign(const toml::node& n, std::vector<T>& out) {
    const toml::array* arr = n.as_array();
    if (!arr) return false;
    std::vector<T> tmp;
    for (const auto& item : *arr) {
      T v{};
      if (!assign(item, v)) return false;
      tmp.push_back(v);
    }
    out = std::move(tmp);
    return true;
  }
  static bool assign(const toml::node& n, int& out) {
    auto v = n.value_exact<std::int64_t>();
    if (!v || *v < 0 || *v > 1'000'000) return false;
    out = static_cast<int>(*v);
    return true;
  }
  static bool assign(const toml::node& n, std::array<double, 2>& out) {
    std::vector<double> v;
    if (!assign(n, v) || v.size() != 2) return false;
    out = {v[0], v[1]};
    return true;
  }

  template <typename T>
  static std::string expected() {
    if constexpr (std::is_same_v<T, bool>) return "boolean";
    else if constexpr (std::is_same_v<T, std::string>) return "string";
    else if constexpr (std::is_same_v<T, double> || std::is_same_v<T, std::optional<double>>) return "number";
    else if constexpr (std::is_same_v<T, SchedulerKind>) return "one of multistep, cosine, step";
    else if constexpr (std::is_same_v<T, std::vector<std::array<double, 2>>>) return "array of [x, y] pairs";
    else if constexpr (std::is_same_v<T, std::vector<double>>) return "array of numbers";
    else if constexpr (std::is_same_v<T, std::vector<std::size_t>> || std::is_same_v<T, std::vector<int>>)
      return "array of non-negative integers";
    else return "non-negative integer";
  }

  const toml::table* table_;
  std::string section_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

std::string join_errors(const std::string& origin, const std::vector<std::string>& errors) {
  std::string msg = "invalid configuration (" + origin + "):";
  for (const auto& e : errors) msg += "\n  " + e;
  return msg;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

void RunConfig::merge_toml(std::string_view text, const std::string& origin) {
  toml::table root;
  try {
    root = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << origin << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw ValidationError("invalid configuration: " + os.str());
  }

  std::vector<std::string> errors;
  static const std::set<std::string> sections{"dataset", "model", "train", "trades",
                                              "attack",  "select", "score", "analyze"};
  auto section = [&](const char* name) -> const toml::table* {
    const toml::node* n = root.get(name);
    if (n && !n->is_table()) {
      errors.push_back(std::string(name) + ": expected a table");
      return nullptr;
    }
    return n ? n->as_table() : nullptr;
  };

  SectionReader top(&root, "", errors);
  top.read("seed", seed);
  for (const auto& [k, v] : root)
    if (!sections.count(std::string(k.str())) && k.str() != "seed")
      errors.push_back(std::string(k.str()) + ": unknown key");

  {
    SectionReader r(section("dataset"), "dataset", errors);
    r.read("kind", dataset.kind);
    r.read("centers", dataset.clusters.centers);
    r.read("train_counts", dataset.clusters.train_counts);
    r.read("test_counts", dataset.clusters.test_counts);
    r.read("stds", dataset.clusters.stds);
    r.read("class_of_cluster", dataset.clusters.class_of_cluster);
    r.read("train_path", dataset.train_path);
    r.read("test_path", dataset.test_path);
    r.read("header", dataset.header);
    r.read("minmax", dataset.minmax);
    r.finish();
  }
  {
    SectionReader r(section("model"), "model", errors);
    r.read("hidden_dim", model.hidden_dim);
    r.read("num_blocks", model.num_blocks);
    r.finish();
  }
  {
    SectionReader r(section("train"), "train", errors);
    r.read("mode", train.mode);
    r.read("epochs", train.epochs);
    r.read("batch_size", train.batch_size);
    r.read("lr", train.lr);
    r.read("momentum", train.momentum);
    r.read("weight_decay", train.weight_decay);
    r.read("scheduler", train.scheduler);
    r.read("milestones", train.milestones);
    r.read("gamma", train.gamma);
    r.read("step_size", train.step_size);
    r.read("t_max", train.t_max);
    r.read("eta_min", train.eta_min);
    r.read("checkpoint_every", train.checkpoint_every);
    r.finish();
  }
  {
    SectionReader r(section("trades"), "trades", errors);
    r.read("beta", trades.beta);
    r.read("epsilon", trades.epsilon);
    r.read("steps", trades.steps);
    r.read("step_size", trades.step_size);
    r.read("random_start", trades.random_start);
    r.finish();
  }
  {
    SectionReader r(section("attack"), "attack", errors);
    r.read("epsilon", attack.epsilon);
    r.read("steps", attack.steps);
    r.read("step_size", attack.step_size);
    r.read("random_start", attack.random_start);
    r.read("clip_min", attack.clip_min);
    r.read("clip_max", attack.clip_max);
    r.read("batch_size", attack.batch_size);
    r.finish();
  }
  {
    SectionReader r(section("select"), "select", errors);
    r.read("method", select.method);
    r.read("fraction", select.fraction);
    r.read("seed", select.seed);
    r.finish();
  }
  {
    SectionReader r(section("score"), "score", errors);
    r.read("probe_test", score.probe_test);
    r.read("trajectory", score.trajectory);
    r.finish();
  }
  {
    SectionReader r(section("analyze"), "analyze", errors);
    r.read("bins", analyze.bins);
    r.read("resolution", analyze.resolution);
    r.read("pad", analyze.pad);
    r.read("variance_targets", analyze.variance_targets);
    r.read("histogram_bins", analyze.histogram_bins);
    r.read("lemma1_batch", analyze.lemma1_batch);
    r.read("lemma1_batches", analyze.lemma1_batches);
    r.read("split", analyze.split);
    r.finish();
  }
  if (!errors.empty()) throw ValidationError(join_errors(origin, errors));
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  merge_toml(os.str(), path.string());
}

void RunConfig::merge_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects section.key=value, got '" + assignment + "'");
  const std::string lhs = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  const auto dot = lhs.find('.');
  const std::string header = dot == std::string::npos ? "" : "[" + lhs.substr(0, dot) + "]\n";
  const std::string key = dot == std::string::npos ? lhs : lhs.substr(dot + 1);
  try {
    (void)toml::parse(key + " = " + value);
    merge_toml(header + key + " = " + value, "--set " + lhs);
  } catch (const toml::parse_error&) {
    merge_toml(header + key + " = " + nlohmann::json(value).dump(), "--set " + lhs);
  }
}

void RunConfig::validate() const {
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  check(dataset.kind == "clusters" || dataset.kind == "csv", "dataset.kind: must be clusters or csv");
  if (dataset.kind == "clusters") {
    try {
      dataset.clusters.validate();
    } catch (const Error& e) {
      errors.push_back(std::string("dataset: ") + e.what());
    }
  } else {
    check(!dataset.train_path.empty(), "dataset.train_path: required when kind = csv");
  }
  check(model.hidden_dim > 0, "model.hidden_dim: must be positive");
  check(train.mode == "standard" || train.mode == "trades", "train.mode: must be standard or trades");
  try {
    train_config(false).validate();
  } catch (const Error& e) {
    errors.push_back(std::string("train: ") + e.what());
  }
  try {
    trades_config().validate();
  } catch (const Error& e) {
    errors.push_back(std::string("trades: ") + e.what());
  }
  check(trades.epsilon >= 0.0, "trades.epsilon: must be >= 0");
  try {
    attack_config().validate();
  } catch (const Error& e) {
    errors.push_back(std::string("attack: ") + e.what());
  }
  check(attack.batch_size > 0, "attack.batch_size: must be positive");
  try {
    parse_coreset_method(select.method);
  } catch (const Error&) {
    errors.push_back("select.method: must be easycore, easycore_balanced or uniform");
  }
  check(select.fraction > 0.0 && select.fraction <= 1.0, "select.fraction: must be in (0, 1]");
  check(analyze.bins >= 2, "analyze.bins: must be >= 2");
  check(analyze.resolution >= 2, "analyze.resolution: must be >= 2");
  check(analyze.pad >= 0.0, "analyze.pad: must be >= 0");
  check(!analyze.variance_targets.empty(), "analyze.variance_targets: must be nonempty");
  for (double t : analyze.variance_targets) check(t > 0.0 && t <= 1.0, "analyze.variance_targets: values must be in (0, 1]");
  check(analyze.histogram_bins >= 1, "analyze.histogram_bins: must be >= 1");
  check(analyze.lemma1_batches >= 1, "analyze.lemma1_batches: must be >= 1");
  check(analyze.split == "train" || analyze.split == "test", "analyze.split: must be train or test");
  if (!errors.empty()) throw ValidationError(join_errors("resolved", errors));
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  auto& d = j["dataset"];
  d["kind"] = dataset.kind;
  if (dataset.kind == "clusters") {
    d["centers"] = dataset.clusters.centers;
    d["train_counts"] = dataset.clusters.train_counts;
    d["test_counts"] = dataset.clusters.test_counts;
    d["stds"] = dataset.clusters.stds;
    d["class_of_cluster"] = dataset.clusters.class_of_cluster;
  } else {
    d["train_path"] = dataset.train_path;
    d["test_path"] = dataset.test_path;
    d["header"] = dataset.header;
    d["minmax"] = dataset.minmax;
  }
  j["model"] = {{"hidden_dim", model.hidden_dim}, {"num_blocks", model.num_blocks}};
  j["train"] = {{"mode", train.mode},
                {"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"lr", train.lr},
                {"momentum", train.momentum},
                {"weight_decay", train.weight_decay},
                {"scheduler", std::string(to_string(train.scheduler))},
                {"milestones", train.milestones},
                {"gamma", train.gamma},
                {"step_size", train.step_size},
                {"t_max", train.t_max.value_or(train.epochs)},
                {"eta_min", train.eta_min},
                {"checkpoint_every", train.checkpoint_every}};
  j["trades"] = {{"beta", trades.beta},
                 {"epsilon", trades.epsilon},
                 {"steps", trades.steps},
                 {"step_size", trades.step_size.value_or(trades.epsilon / 4.0)},
                 {"random_start", trades.random_start}};
  j["attack"] = {{"epsilon", attack.epsilon},
                 {"steps", attack.steps},
                 {"step_size", attack.step_size.value_or(attack.epsilon / 4.0)},
                 {"random_start", attack.random_start},
                 {"clip_min", opt(attack.clip_min)},
                 {"clip_max", opt(attack.clip_max)},
                 {"batch_size", attack.batch_size}};
  j["select"] = {{"method", select.method},
                 {"fraction", select.fraction},
                 {"seed", select.seed.value_or(subsystem_seed("select"))}};
  j["score"] = {{"probe_test", score.probe_test}, {"trajectory", score.trajectory}};
  j["analyze"] = {{"bins", analyze.bins},
                  {"resolution", analyze.resolution},
                  {"pad", analyze.pad},
                  {"variance_targets", analyze.variance_targets},
                  {"histogram_bins", analyze.histogram_bins},
                  {"lemma1_batch", analyze.lemma1_batch},
                  {"lemma1_batches", analyze.lemma1_batches},
                  {"split", analyze.split}};
  return j;
}

std::string RunConfig::digest() const { return sha256_hex(to_json().dump()); }

std::uint64_t RunConfig::subsystem_seed(std::string_view name) const { return derive_seed(seed, name); }

SplitDataset RunConfig::load_data() const {
  if (dataset.kind == "clusters") return generate_clusters(dataset.clusters, subsystem_seed("data"));
  const CsvOptions opts{dataset.header, dataset.minmax};
  SplitDataset split;
  split.train = load_csv_dataset(dataset.train_path, opts);
  split.test = dataset.test_path.empty() ? split.train : load_csv_dataset(dataset.test_path, opts);
  return split;
}

ModelConfig RunConfig::model_config(const Dataset& data) const {
  return ModelConfig{data.dim(), model.hidden_dim, model.num_blocks, static_cast<std::size_t>(data.class_count)};
}

TrainConfig RunConfig::train_config(bool record_aign) const {
  TrainConfig c;
  c.epochs = train.epochs;
  c.batch_size = train.batch_size;
  c.initial_lr = train.lr;
  c.momentum = train.momentum;
  c.weight_decay = train.weight_decay;
  c.scheduler.kind = train.scheduler;
  c.scheduler.milestones = train.milestones;
  c.scheduler.gamma = train.gamma;
  c.scheduler.step_size = train.step_size;
  c.scheduler.t_max = train.t_max.value_or(std::max<std::size_t>(1, train.epochs));
  c.scheduler.eta_min = train.eta_min;
  c.seed = subsystem_seed("shuffle");
  c.checkpoint_every = train.checkpoint_every;
  c.record_aign = record_aign;
  return c;
}

TradesConfig RunConfig::trades_config() const {
  TradesConfig t = TradesConfig::with_epsilon(trades.epsilon);
  t.beta = trades.beta;
  t.inner_attack.steps = trades.steps;
  t.inner_attack.step_size = trades.step_size;
  t.inner_attack.random_start = trades.random_start;
  t.inner_attack.start_seed = subsystem_seed("trades-start");
  return t;
}

AttackConfig RunConfig::attack_config() const {
  AttackConfig a;
  a.epsilon = attack.epsilon;
  a.steps = attack.steps;
  a.step_size = attack.step_size;
  a.random_start = attack.random_start;
  a.start_seed = subsystem_seed("attack-start");
  a.clip_min = attack.clip_min;
  a.clip_max = attack.clip_max;
  return a;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return sha256_hex(os.str());
}

}  // namespace easycore::cli
