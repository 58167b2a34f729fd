#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <numeric>

#include "easycore/analysis.hpp"
#include "easycore/attack.hpp"
#include "easycore/checkpoint.hpp"
#include "easycore/coreset.hpp"
#include "easycore/error.hpp"
#include "easycore/svg.hpp"
#include "easycore/train.hpp"
#include "manifest.hpp"

namespace easycore::cli {

namespace {

namespace fs = std::filesystem;

class Run {
 public:
  Run(const RunConfig& config, const CommandArgs& args)
      : config_(config), args_(args), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(args.out_dir);
  }

  fs::path output(const std::string& name) {
    fs::path p = args_.out_dir / name;
    outputs_.push_back(p);
    return p;
  }
  void input(const fs::path& p) { inputs_.push_back(p); }
  nlohmann::json& summary() { return summary_; }

  void finish() {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const auto manifest = make_manifest(args_.subcommand, config_, inputs_, outputs_, wall, summary_);
    write_manifest(manifest, args_.out_dir / "manifest.json");
  }

 private:
  const RunConfig& config_;
  const CommandArgs& args_;
  std::chrono::steady_clock::time_point start_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> outputs_;
  nlohmann::json summary_ = nlohmann::json::object();
};

const fs::path& require(const std::optional<fs::path>& p, const char* flag, const std::string& what) {
  if (!p) throw ValidationError(what + " requires " + flag);
  return *p;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

Dataset pick_split(const RunConfig& config, const CommandArgs& args, Run& run) {
  if (args.data_csv) {
    run.input(*args.data_csv);
    return load_csv_dataset(*args.data_csv, CsvOptions{config.dataset.header, config.dataset.minmax});
  }
  auto split = config.load_data();
  if (args.split == "train") return std::move(split.train);
  if (args.split == "test") return std::move(split.test);
  throw ValidationError("--split must be train or test, got '" + args.split + "'");
}

Model load_model(const RunConfig& config, const Dataset& data, const CommandArgs& args, Run& run) {
  const auto& path = require(args.checkpoint, "--checkpoint", args.subcommand);
  run.input(path);
  return load_checkpoint(path, config.model_config(data));
}

void write_trajectory_csv(const AignLedger& ledger, const fs::path& path) {
  auto out = open_out(path);
  const auto& epochs = ledger.per_epoch();
  out << "id";
  for (std::size_t e = 0; e < epochs.size(); ++e) out << ",epoch_" << e;
  out << '\n';
  for (std::size_t i = 0; i < ledger.size(); ++i) {
    out << ledger.ids()[i];
    for (const auto& row : epochs) out << ',' << format_double(row[i]);
    out << '\n';
  }
}

void cmd_generate(const RunConfig& config, const CommandArgs&, Run& run) {
  const auto split = config.load_data();
  write_csv_dataset(split.train, run.output("train.csv"));
  write_csv_dataset(split.test, run.output("test.csv"));
  run.summary() = {{"train_rows", split.train.size()}, {"test_rows", split.test.size()}, {"dim", split.train.dim()},
                   {"class_count", split.train.class_count}};
}

void cmd_score(const RunConfig& config, const CommandArgs&, Run& run) {
  const auto split = config.load_data();
  TrainConfig tc = config.train_config(true);
  tc.keep_aign_trajectory = config.score.trajectory;
  TrainHooks hooks;
  if (config.score.probe_test) hooks.probes.push_back(&split.test);
  Model init = build_model(config.model_config(split.train), config.subsystem_seed("init"));
  const auto result = train_standard(std::move(init), split.train, tc, hooks);

  const auto table = make_score_table(*result.ledger, split.train.labels);
  write_score_csv(table, run.output("scores.csv"));
  if (config.score.probe_test) {
    write_score_csv(make_score_table(result.probe_ledgers.front(), split.test.labels), run.output("test_scores.csv"));
  }
  if (config.score.trajectory) write_trajectory_csv(*result.ledger, run.output("trajectory.csv"));
  write_train_log_csv(result.log, run.output("train_log.csv"));
  save_checkpoint(result.model, run.output("model.ezc"));
  run.summary() = {{"samples", table.ids.size()},
                   {"epochs", tc.epochs},
                   {"train_accuracy", accuracy(result.model, split.train)},
                   {"test_accuracy", accuracy(result.model, split.test)}};
}

void cmd_select(const RunConfig& config, const CommandArgs& args, Run& run) {
  const auto& path = require(args.scores, "--scores", "select");
  run.input(path);
  const auto table = read_score_csv(path);
  CoresetSpec spec;
  spec.method = parse_coreset_method(config.select.method);
  spec.fraction = config.select.fraction;
  spec.seed = config.select.seed.value_or(config.subsystem_seed("select"));
  if (spec.method == CoresetMethod::easycore_balanced && table.labels.size() != table.ids.size())
    throw ValidationError("easycore_balanced selection needs a label for every scored sample");
  std::vector<int> empty_classes;
  const auto ids = select_coreset(table, spec, &empty_classes);
  for (int c : empty_classes)
    std::cerr << "warning: class " << c << " receives no samples at fraction " << spec.fraction << '\n';
  write_selection_csv(ids, run.output("selection.csv"));
  run.summary() = {{"method", std::string(to_string(spec.method))}, {"selected", ids.size()},
                   {"of", table.ids.size()}};
}

void cmd_train(const RunConfig& config, const CommandArgs& args, Run& run) {
  const auto split = config.load_data();
  Dataset data = split.train;
  if (args.selection) {
    run.input(*args.selection);
    auto ids = read_selection_csv(*args.selection);
    if (ids.empty()) throw ValidationError("selection " + args.selection->string() + " is empty");
    // Dataset order, not rank order: a full selection then trains exactly like no selection.
    std::sort(ids.begin(), ids.end());
    data = subset(split.train, ids);
  }
  TrainConfig tc = config.train_config(false);
  tc.checkpoint_dir = args.out_dir / "checkpoints";
  Model init = build_model(config.model_config(split.train), config.subsystem_seed("init"));
  const auto result = config.train.mode == "trades"
                          ? train_trades(std::move(init), data, tc, config.trades_config())
                          : train_standard(std::move(init), data, tc);
  save_checkpoint(result.model, run.output("model.ezc"));
  write_train_log_csv(result.log, run.output("train_log.csv"));
  for (const auto& c : result.checkpoints) run.output(fs::relative(c, args.out_dir).string());
  run.summary() = {{"mode", config.train.mode},
                   {"train_rows", data.size()},
                   {"train_accuracy", accuracy(result.model, data)},
                   {"test_accuracy", accuracy(result.model, split.test)}};
}

void cmd_attack(const RunConfig& config, const CommandArgs& args, Run& run) {
  const Dataset data = pick_split(config, args, run);
  const Model model = load_model(config, data, args, run);
  const auto result = adversarial_accuracy(model, data, config.attack_config(), config.attack.batch_size);
  write_attack_csv(result, run.output("attack.csv"));
  auto out = open_out(run.output("summary.csv"));
  out << "metric,value\n"
      << "clean_accuracy," << format_double(result.clean_accuracy) << '\n'
      << "adversarial_accuracy," << format_double(result.overall) << '\n'
      << "samples," << data.size() << '\n';
  run.summary() = {{"clean_accuracy", result.clean_accuracy}, {"adversarial_accuracy", result.overall}};
}

void analyze_boundary(const RunConfig& config, const CommandArgs& args, Run& run) {
  const auto split = config.load_data();
  const Model model = load_model(config, split.train, args, run);
  const auto grid = GridSpec::around(split.train, config.analyze.pad, config.analyze.resolution);
  const auto raster = boundary_raster(model, grid);
  {
    auto out = open_out(run.output("raster.csv"));
    out << "x,y,class\n";
    for (std::size_t iy = 0; iy < grid.y_res; ++iy)
      for (std::size_t ix = 0; ix < grid.x_res; ++ix)
        out << format_double(grid.x_center(ix)) << ',' << format_double(grid.y_center(iy)) << ','
            << raster.at(iy, ix) << '\n';
  }
  const std::size_t complexity = boundary_complexity(raster);
  auto out = open_out(run.output("complexity.csv"));
  out << "complexity,x_res,y_res,x_min,x_max,y_min,y_max\n"
      << complexity << ',' << grid.x_res << ',' << grid.y_res << ',' << format_double(grid.x_min) << ','
      << format_double(grid.x_max) << ',' << format_double(grid.y_min) << ',' << format_double(grid.y_max) << '\n';
  if (args.svg) write_raster_svg(raster, &split.train, run.output("raster.svg"));
  run.summary() = {{"complexity", complexity}};
}

void analyze_kappa(const RunConfig& config, const CommandArgs& args, Run& run) {
  const Dataset data = pick_split(config, args, run);
  const Model model = load_model(config, data, args, run);
  const Tensor feats = penultimate_features(model, data.features);
  auto out = open_out(run.output("kappa.csv"));
  out << "target,kappa,total_dim\n";
  nlohmann::json kappas = nlohmann::json::object();
  for (double t : config.analyze.variance_targets) {
    const std::size_t k = pca_kappa(feats, t);
    out << format_double(t) << ',' << k << ',' << feats.cols() << '\n';
    kappas[format_double(t)] = k;
  }
  run.summary() = {{"kappa", kappas}};
}

void analyze_curve(const RunConfig& config, const CommandArgs& args, Run& run) {
  const auto& scores_path = require(args.scores, "--scores", "analyze curve");
  const auto& attack_path = require(args.attack_csv, "--attack", "analyze curve");
  run.input(scores_path);
  run.input(attack_path);
  const auto table = read_score_csv(scores_path);
  const auto attack = read_attack_csv(attack_path);
  const std::size_t max_id = std::max(*std::max_element(table.ids.begin(), table.ids.end()),
                                      *std::max_element(attack.ids.begin(), attack.ids.end()));
  std::vector<std::uint8_t> by_id(max_id + 1, 0);
  std::vector<std::uint8_t> present(max_id + 1, 0);
  for (std::size_t i = 0; i < attack.ids.size(); ++i) {
    by_id[attack.ids[i]] = attack.adv_correct[i];
    present[attack.ids[i]] = 1;
  }
  std::vector<std::uint8_t> outcomes;
  for (std::size_t id : table.ids) {
    if (!present[id]) throw ValidationError("sample id " + std::to_string(id) + " is scored but was not attacked");
    outcomes.push_back(by_id[id]);
  }
  const auto order = hardness_order(table.aign, table.ids);
  const auto curve = hardness_accuracy_curve(by_id, order, config.analyze.bins);
  auto out = open_out(run.output("curve.csv"));
  out << "bin,accuracy\n";
  for (std::size_t b = 0; b < curve.size(); ++b) out << b << ',' << format_double(curve[b]) << '\n';
  if (args.svg) write_curve_svg(curve, "adversarial accuracy by AIGN bin", run.output("curve.svg"));
  nlohmann::json rho = nullptr;
  try {
    rho = rank_correlation(table.aign, outcomes);
  } catch (const ValidationError&) {
    // constant outcomes: correlation undefined
  }
  run.summary() = {{"spearman", rho},
                   {"first_bin", curve.front()},
                   {"last_bin", curve.back()}};
}

void analyze_lemma1(const RunConfig& config, const CommandArgs& args, Run& run) {
  const Dataset data = pick_split(config, args, run);
  const Model model = load_model(config, data, args, run);
  const std::size_t b = config.analyze.lemma1_batch;
  auto out = open_out(run.output("lemma1.csv"));
  out << "batch,input_grad_norm,weight_grad_norm,first_layer_norm,pinv_norm,s_p,k_g,holds\n";
  std::size_t held = 0, total = 0;
  for (std::size_t k = 0; k < config.analyze.lemma1_batches && (k + 1) * b <= data.size(); ++k) {
    std::vector<std::size_t> rows(b);
    std::iota(rows.begin(), rows.end(), k * b);
    const auto rep = lemma1_check(model, data.gather_rows(rows), data.gather_labels(rows));
    out << k << ',' << format_double(rep.input_grad_norm) << ',' << format_double(rep.weight_grad_norm) << ','
        << format_double(rep.first_layer_norm) << ',' << format_double(rep.pinv_norm) << ','
        << format_double(rep.s_p) << ',' << format_double(rep.k_g) << ',' << (rep.holds ? 1 : 0) << '\n';
    held += rep.holds;
    ++total;
  }
  if (total == 0) throw ValidationError("analyze lemma1: dataset smaller than one batch");
  run.summary() = {{"batches", total}, {"held", held}};
}

void analyze_histogram(const RunConfig& config, const CommandArgs& args, Run& run) {
  const auto& path = require(args.scores, "--scores", "analyze histogram");
  run.input(path);
  const auto hist = aign_histogram(read_score_csv(path).aign, config.analyze.histogram_bins);
  auto out = open_out(run.output("histogram.csv"));
  out << "bin,left,right,density\n";
  for (std::size_t i = 0; i < hist.densities.size(); ++i)
    out << i << ',' << format_double(hist.edges[i]) << ',' << format_double(hist.edges[i + 1]) << ','
        << format_double(hist.densities[i]) << '\n';
  if (args.svg) write_histogram_svg(hist, "AIGN density", run.output("histogram.svg"));
  run.summary() = {{"bins", hist.densities.size()}};
}

void analyze_project2d(const RunConfig& config, const CommandArgs& args, Run& run) {
  const Dataset data = pick_split(config, args, run);
  const Model model = load_model(config, data, args, run);
  const auto proj = pca_project2d(penultimate_features(model, data.features), data.labels);
  {
    auto out = open_out(run.output("projection.csv"));
    out << "id,label,pc1,pc2\n";
    for (std::size_t i = 0; i < data.size(); ++i)
      out << data.ids[i] << ',' << data.labels[i] << ',' << format_double(proj.coords[i][0]) << ','
          << format_double(proj.coords[i][1]) << '\n';
  }
  auto out = open_out(run.output("centroids.csv"));
  out << "class,pc1,pc2\n";
  for (std::size_t c = 0; c < proj.classes.size(); ++c)
    out << proj.classes[c] << ',' << format_double(proj.centroids[c][0]) << ','
        << format_double(proj.centroids[c][1]) << '\n';
  if (args.svg) write_projection_svg(proj, data.labels, run.output("projection.svg"));
}

void cmd_analyze(const RunConfig& config, const CommandArgs& args, Run& run) {
  if (args.kind == "boundary") return analyze_boundary(config, args, run);
  if (args.kind == "kappa") return analyze_kappa(config, args, run);
  if (args.kind == "curve") return analyze_curve(config, args, run);
  if (args.kind == "lemma1") return analyze_lemma1(config, args, run);
  if (args.kind == "histogram") return analyze_histogram(config, args, run);
  if (args.kind == "project2d") return analyze_project2d(config, args, run);
  throw ValidationError("unknown analysis kind '" + args.kind +
                        "' (expected boundary, kappa, curve, lemma1, histogram or project2d)");
}

}  // namespace

void run_command(const RunConfig& config, const CommandArgs& args) {
  config.validate();
  Run run(config, args);
  if (args.subcommand == "generate") cmd_generate(config, args, run);
  else if (args.subcommand == "score") cmd_score(config, args, run);
  else if (args.subcommand == "select") cmd_select(config, args, run);
  else if (args.subcommand == "train") cmd_train(config, args, run);
  else if (args.subcommand == "attack") cmd_attack(config, args, run);
  else if (args.subcommand == "analyze") cmd_analyze(config, args, run);
  else throw ValidationError("unknown subcommand '" + args.subcommand + "'");
  run.finish();
}

std::vector<std::string> verify_command(const RunConfig& config, const CommandArgs& args) {
  const auto path = args.out_dir / "manifest.json";
  if (!fs::exists(path)) return {"no manifest at " + path.string()};
  return verify_manifest(read_manifest(path), args.subcommand, config);
}

}  // namespace easycore::cli
