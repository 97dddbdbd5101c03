#include "egal/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "egal/dataset.hpp"
#include "egal/eval.hpp"
#include "egal/service.hpp"

namespace egal {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitEndedEarly = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void init_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  // stdout carries CSV, so logs go to stderr.
  auto logger = spdlog::stderr_color_mt("egal");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("EGAL_LOG")) spdlog::set_level(spdlog::level::from_str(level));
}

// Flags shared by run and sweep. Names mirror RunConfig fields so a config
// file can use either spelling of the flag without the dashes.
struct ConfigFlags {
  RunConfig config;
  std::string strategy = "egal_hybrid";
  std::string al_score = "entropy";
  std::optional<double> alpha_floor;

  void attach(CLI::App& app) {
    app.add_option("--gamma", config.gamma, "Frequency threshold below which a class counts as rare")
        ->capture_default_str();
    app.add_option("--delta", config.delta, "Confidence parameter of the stopping rule")->capture_default_str();
    app.add_option("--budget", config.budget, "Label budget")->capture_default_str();
    app.add_option("--batch", config.batch_size, "Labels between retrains")->capture_default_str();
    app.add_option("--epsilon", config.epsilon, "Uniform-step probability of epsilon-greedy selection")
        ->capture_default_str();
    app.add_option("--alpha-floor", alpha_floor, "Propensity floor (default 0.1/n)");
    app.add_option("--al-score", al_score, "Uncertainty score: entropy or least_confidence")->capture_default_str();
    app.add_option("--al-lambda", config.al_lambda, "Temperature of Boltzmann uncertainty sampling")
        ->capture_default_str();
    app.add_flag("--unknown-class-guarantee", config.unknown_class_guarantee,
                 "Force uniform uncertainty steps until enough clean uniform draws");
    app.add_option("--reg", config.reg_strength, "Inverse L2 strength of the classifier")->capture_default_str();
    app.add_option("--train-tol", config.train_tol, "Gradient tolerance of classifier training")->capture_default_str();
    app.add_option("--train-max-iter", config.train_max_iter, "Iteration cap of classifier training")
        ->capture_default_str();
    app.add_option("--lambda-runs", config.lambda_runs, "Simulated batches per search temperature candidate")
        ->capture_default_str();
    app.add_option("--lambda-grid", config.lambda_grid_size, "Number of search temperature candidates")
        ->capture_default_str();
  }

  RunConfig resolve() const {
    RunConfig c = config;
    auto s = parse_strategy(strategy);
    if (!s) throw ConfigError("strategy", "unknown strategy '" + strategy + "'");
    c.strategy = *s;
    auto a = parse_al_score(al_score);
    if (!a) throw ConfigError("al_score", "must be 'entropy' or 'least_confidence'");
    c.al_score = *a;
    c.alpha_floor = alpha_floor;
    c.validate();
    return c;
  }
};

struct DataFlags {
  std::string pool = "pool.jsonl";
  std::string exemplars = "exemplars.jsonl";
  std::string test = "test.jsonl";

  void attach(CLI::App& app) {
    app.add_option("--pool", pool, "Pool file (JSONL or packed binary)")->capture_default_str();
    app.add_option("--exemplars", exemplars, "Exemplar JSONL file")->capture_default_str();
    app.add_option("--test", test, "Held-out test JSONL for balanced accuracy")->capture_default_str();
  }

  SweepDataset load(const CLI::App& app) const {
    SweepDataset d;
    d.name = fs::path(pool).stem().string();
    d.pool = std::make_shared<const Dataset>(load_dataset(pool, exemplars));
    if (fs::exists(test)) {
      d.test = read_pool_jsonl(test);
    } else if (app.count("--test") > 0) {
      throw DatasetError("test file " + test + " does not exist");
    } else {
      spdlog::warn("no test file at {}, balanced accuracy will be nan", test);
    }
    return d;
  }
};

std::pair<std::size_t, std::size_t> parse_skew(const std::string& skew) {
  static const std::regex pattern(R"((\d+):(\d+))");
  std::smatch m;
  if (!std::regex_match(skew, m, pattern)) throw UsageError("--skew must look like 1:R");
  const auto left = std::stoul(m[1]);
  const auto right = std::stoul(m[2]);
  if (left != 1 || right == 0) throw UsageError("--skew must be 1:R with R >= 1");
  return {left, right};
}

std::vector<Strategy> parse_strategies(const std::string& list) {
  std::vector<Strategy> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    auto s = parse_strategy(name);
    if (!s) throw ConfigError("strategies", "unknown strategy '" + name + "'");
    out.push_back(*s);
  }
  if (out.empty()) throw ConfigError("strategies", "at least one strategy is required");
  return out;
}

struct SynthFlags {
  std::size_t classes = 4;
  std::size_t dim = 16;
  std::string skew = "1:100";
  std::size_t rare_count = 50;
  double separation = 6.0;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::size_t test_per_class = 50;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  const auto [one, ratio] = parse_skew(f.skew);
  (void)one;
  if (f.classes < 2) throw UsageError("--classes must be at least 2");
  if (f.dim < f.classes) throw UsageError("--dim must be at least --classes");
  if (f.rare_count == 0) throw UsageError("--rare-count must be positive");

  // The last class is rare; the others share ratio * rare_count train examples.
  const std::size_t commons = f.classes - 1;
  const std::size_t common_total = ratio * f.rare_count;
  std::vector<std::size_t> counts;
  for (std::size_t k = 0; k < commons; ++k) {
    const std::size_t share = common_total / commons + (k < common_total % commons ? 1 : 0);
    if (share == 0) throw UsageError("skew leaves a common class without examples");
    counts.push_back(share + f.test_per_class);
  }
  counts.push_back(f.rare_count + f.test_per_class);

  const auto full = synth_dataset({f.dim, counts, f.separation, f.seed});
  const std::string rare = "class_" + std::to_string(f.classes - 1);
  auto split = subsample_skew(full, rare, f.rare_count, f.seed, f.test_per_class);

  std::ostringstream header;
  header << "egal synth classes=" << f.classes << " dim=" << f.dim << " skew=" << f.skew
         << " rare_count=" << f.rare_count << " separation=" << f.separation << " seed=" << f.seed;
  const fs::path dir(f.out_dir);
  fs::create_directories(dir);
  std::vector<ExampleRecord> pool;
  for (std::size_t i = 0; i < split.train.size(); ++i) pool.push_back(split.train.record(i));
  write_pool_jsonl(dir / "pool.jsonl", pool, header.str());
  write_exemplars_jsonl(dir / "exemplars.jsonl", split.train.exemplars(), header.str());
  write_pool_jsonl(dir / "test.jsonl", split.test, header.str());
  out << "wrote " << (dir / "pool.jsonl").string() << " (" << pool.size() << " examples), "
      << (dir / "exemplars.jsonl").string() << ", " << (dir / "test.jsonl").string() << " (" << split.test.size()
      << " examples)\n";
  return kExitOk;
}

int cmd_run(const CLI::App& app, const ConfigFlags& cf, const DataFlags& df, std::uint64_t seed,
            const std::string& trajectory_path, std::ostream& out, std::ostream& err) {
  RunConfig config = cf.resolve();
  config.seed = seed;
  const auto data = df.load(app);
  const auto run = run_strategy(config.strategy, data.pool, data.test, config);

  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < run.checkpoints.size(); ++k) {
    rows.push_back({std::string(to_string(config.strategy)), data.name, seed, run.checkpoints[k],
                    run.checkpoint_wall_ms[k]});
  }
  write_rows_csv(out, rows);

  if (!trajectory_path.empty()) {
    std::ofstream traj(trajectory_path);
    if (!traj) throw std::runtime_error("cannot write " + trajectory_path);
    traj << "spent,example_id,label,mode,events\n";
    for (const auto& step : run.trajectory) {
      std::string events;
      for (const auto& e : step.events) {
        if (!events.empty()) events += ';';
        events += std::string(to_string(e.type));
        if (!e.class_id.empty()) events += ":" + e.class_id;
      }
      traj << step.spent << ',' << step.example_id << ',' << step.label << ',' << to_string(step.mode) << ',' << events
           << '\n';
    }
  }

  if (run.end == EventType::kBudgetExhausted || run.end == EventType::kAllClassesRuledOut) return kExitOk;
  err << "run ended before its budget: " << (run.end ? to_string(*run.end) : "unknown") << '\n';
  return kExitEndedEarly;
}

int cmd_sweep(const CLI::App& app, const ConfigFlags& cf, const DataFlags& df, const std::string& strategies,
              std::size_t n_seeds, std::uint64_t seed_base, const std::string& out_path, std::string summary_path,
              bool force, std::size_t parallel, std::ostream& out) {
  if (n_seeds == 0) throw UsageError("--seeds must be at least 1");
  if (summary_path.empty()) {
    fs::path p(out_path);
    summary_path = (p.parent_path() / (p.stem().string() + ".summary.csv")).string();
  }
  for (const auto& p : {out_path, summary_path}) {
    if (fs::exists(p) && !force) throw UsageError(p + " exists; pass --force to overwrite");
  }
  const RunConfig config = cf.resolve();
  const auto strats = parse_strategies(strategies);
  const std::vector<SweepDataset> data{df.load(app)};
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < n_seeds; ++i) seeds.push_back(seed_base + i);

  const auto rows = run_sweep(strats, data, seeds, config, parallel);
  const auto summary = summarize(rows);
  std::ofstream rows_out(out_path), summary_out(summary_path);
  if (!rows_out || !summary_out) throw std::runtime_error("cannot write sweep output");
  write_rows_csv(rows_out, rows);
  write_summary_csv(summary_out, summary);
  out << "wrote " << rows.size() << " rows to " << out_path << " and " << summary.size() << " rows to " << summary_path
      << '\n';
  return kExitOk;
}

int cmd_serve(const std::string& pool, const std::string& exemplars, const std::string& dataset_name,
              const std::string& host, int port, const std::string& snapshot_dir, std::ostream& out) {
  std::map<std::string, std::shared_ptr<const Dataset>> datasets;
  datasets.emplace(dataset_name, std::make_shared<const Dataset>(load_dataset(pool, exemplars)));
  std::optional<fs::path> snapshots;
  if (!snapshot_dir.empty()) snapshots = snapshot_dir;
  Service service(std::move(datasets), snapshots);
  const int bound = service.bind(host, port);
  out << "serving on http://" << host << ':' << bound << " (" << service.session_count() << " restored sessions)"
      << std::endl;
  service.listen();
  return kExitOk;
}

}  // namespace

// CLI11 only reads config files attached to the root app, so subcommands load
// theirs here. Command-line flags win over file values.
void apply_config_file(CLI::App& cmd) {
  const auto* cfg = cmd.get_config_ptr();
  if (cfg == nullptr || cfg->count() == 0) return;
  const auto path = cfg->as<std::string>();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  for (const auto& item : CLI::ConfigINI().from_config(in)) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    auto* opt = cmd.get_option_no_throw("--" + item.name);
    if (opt == nullptr || opt == cfg) throw UsageError("unknown key in config file: " + item.name);
    if (opt->count() > 0) continue;
    if (opt->get_expected_min() == 0) {
      opt->add_result(item.inputs.empty() ? std::string("true") : item.inputs.front());
    } else {
      opt->add_result(item.inputs);
    }
    opt->run_callback();
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  init_logging();
  CLI::App app{"Exemplar-guided active learning: data synthesis, simulation runs, sweeps and the annotation service"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a skewed Gaussian-cluster dataset");
  synth_cmd->add_option("--classes", synth.classes, "Number of classes; the last one is rare")->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim, "Embedding dimension")->capture_default_str();
  synth_cmd->add_option("--skew", synth.skew, "1:R = rare examples : all other train examples")->capture_default_str();
  synth_cmd->add_option("--rare-count", synth.rare_count, "Rare-class examples kept in the pool")->capture_default_str();
  synth_cmd->add_option("--separation", synth.separation, "Distance between cluster centers")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--out-dir", synth.out_dir, "Directory for pool.jsonl, exemplars.jsonl, test.jsonl")
      ->capture_default_str();
  synth_cmd->add_option("--test-per-class", synth.test_per_class, "Held-out test examples per class")
      ->capture_default_str();
  synth_cmd->set_config("--config");

  ConfigFlags run_cfg;
  DataFlags run_data;
  std::uint64_t run_seed = 0;
  std::string trajectory;
  auto* run_cmd = app.add_subcommand("run", "Simulate one strategy and print checkpoint metrics as CSV");
  run_cmd->add_option("--strategy", run_cfg.strategy,
                      "random, entropy, least_confidence, egal_iw, egal_eps, egal_hybrid or guided_oracle")
      ->capture_default_str();
  run_cfg.attach(*run_cmd);
  run_data.attach(*run_cmd);
  run_cmd->add_option("--seed", run_seed, "Random seed")->capture_default_str();
  run_cmd->add_option("--trajectory", trajectory, "Also write the per-label trajectory CSV here");
  run_cmd->set_config("--config");

  ConfigFlags sweep_cfg;
  DataFlags sweep_data;
  std::string strategies = "random,egal_hybrid";
  std::size_t n_seeds = 10;
  std::uint64_t seed_base = 0;
  std::string sweep_out, summary_out;
  bool force = false;
  std::size_t parallel = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run strategies over many seeds and write per-seed and summary CSVs");
  sweep_cmd->add_option("--strategies", strategies, "Comma-separated strategy names")->capture_default_str();
  sweep_cfg.attach(*sweep_cmd);
  sweep_data.attach(*sweep_cmd);
  sweep_cmd->add_option("--seeds", n_seeds, "Number of seeds")->capture_default_str();
  sweep_cmd->add_option("--seed-base", seed_base, "First seed")->capture_default_str();
  sweep_cmd->add_option("--out", sweep_out, "Per-seed results CSV")->required();
  sweep_cmd->add_option("--summary", summary_out, "Summary CSV (default: <out>.summary.csv)");
  sweep_cmd->add_flag("--force", force, "Overwrite existing output files");
  sweep_cmd->add_option("--parallel", parallel, "Worker threads")->capture_default_str();
  sweep_cmd->set_config("--config");

  std::string serve_pool = "pool.jsonl", serve_exemplars = "exemplars.jsonl", dataset_name = "default";
  std::string host = "127.0.0.1", snapshot_dir;
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP annotation service");
  serve_cmd->add_option("--pool", serve_pool, "Pool file")->capture_default_str();
  serve_cmd->add_option("--exemplars", serve_exemplars, "Exemplar JSONL file")->capture_default_str();
  serve_cmd->add_option("--dataset-name", dataset_name, "Name clients use to reference the dataset")
      ->capture_default_str();
  serve_cmd->add_option("--host", host, "Listen address")->capture_default_str();
  serve_cmd->add_option("--port", port, "Listen port (0 picks a free one)")->capture_default_str();
  serve_cmd->add_option("--snapshot-dir", snapshot_dir, "Persist sessions here after every label");
  serve_cmd->set_config("--config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; everything else is a usage error.
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (auto* cmd : {synth_cmd, run_cmd, sweep_cmd, serve_cmd})
      if (*cmd) apply_config_file(*cmd);
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*run_cmd) return cmd_run(*run_cmd, run_cfg, run_data, run_seed, trajectory, out, err);
    if (*sweep_cmd) {
      return cmd_sweep(*sweep_cmd, sweep_cfg, sweep_data, strategies, n_seeds, seed_base, sweep_out, summary_out, force,
                       parallel, out);
    }
    if (*serve_cmd) return cmd_serve(serve_pool, serve_exemplars, dataset_name, host, port, snapshot_dir, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}

}  // namespace egal
