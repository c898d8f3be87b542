#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "beaconopt/baselines.hpp"
#include "beaconopt/checkpoint.hpp"
#include "beaconopt/config.hpp"
#include "beaconopt/evaluation.hpp"
#include "beaconopt/geometry.hpp"
#include "beaconopt/numfmt.hpp"
#include "beaconopt/selfcheck.hpp"
#include "beaconopt/trainer.hpp"

namespace fs = std::filesystem;
using namespace beaconopt;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;
constexpr int kExitCheckpoint = 4;

constexpr const char* kOutDirEnv = "BEACONOPT_OUT_DIR";

// "COLSxROWS" -> (cols, rows)
std::pair<int, int> parse_resolution(const std::string& flag, const std::string& s) {
  const auto x = s.find('x');
  int cols = 0;
  int rows = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument("");
    std::size_t used = 0;
    cols = std::stoi(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument("");
    rows = std::stoi(s.substr(x + 1), &used);
    if (used != s.size() - x - 1) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw ConfigError(flag + ": expected COLSxROWS, got '" + s + "'");
  }
  if (cols < 1 || rows < 1) throw ConfigError(flag + ": resolution must be positive, got '" + s + "'");
  return {cols, rows};
}

std::vector<double> parse_thresholds(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size() || !(v > 0.0)) throw std::invalid_argument("");
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("--thresholds: expected positive numbers, got '" + tok + "'");
    }
  }
  return out;
}

Trainer load_trainer(const std::string& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("cannot read checkpoint: ") + e.what());
  }
  return Trainer::from_checkpoint(Checkpoint::deserialize(bytes));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path.string(), text);
}

std::string default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return env && *env ? env : ".";
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  std::string out;
  std::string resume;
  std::int64_t checkpoint_every = 0;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  std::optional<Trainer> loaded;
  fs::path dir;
  if (!a.resume.empty()) {
    if (!a.config.empty() || !a.overrides.empty() || a.seed >= 0)
      throw ConfigError("--resume takes its configuration from the checkpoint");
    loaded.emplace(load_trainer(a.resume));
    dir = a.out.empty() ? fs::path(a.resume).parent_path() : fs::path(a.out);
  } else {
    RunConfig rc;
    rc.preset = "tworoom";
    rc.out_dir = default_out_dir();
    if (!a.config.empty()) rc = load_config_file(a.config, rc);
    for (const auto& o : a.overrides) apply_override(rc, o);
    if (a.seed >= 0) rc.train.seed = static_cast<std::uint64_t>(a.seed);
    if (!a.out.empty()) rc.out_dir = a.out;
    EnvironmentMap map = [&] {
      try {
        return resolve_map(rc);
      } catch (const MapError& e) {
        throw ConfigError(e.what());
      }
    }();
    try {
      loaded.emplace(rc.train, map);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    dir = rc.out_dir;
  }
  Trainer& trainer = *loaded;
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);

  const auto& cfg = trainer.config();
  const std::int64_t chunk = a.checkpoint_every > 0 ? a.checkpoint_every : cfg.iterations;
  try {
    while (!trainer.done()) {
      trainer.run(trainer.iteration() + chunk);
      if (!trainer.done()) trainer.checkpoint().save((dir / "checkpoint.bin").string());
      if (!a.quiet && !trainer.log().records.empty()) {
        const auto& r = trainer.log().records.back();
        std::cerr << "iter " << r.iter << "  loss " << fmt_num(r.loss) << "  val_rmse "
                  << fmt_num(r.val_rmse) << "  beacons " << fmt_num(r.expected_beacons) << '\n';
      }
    }
  } catch (const TrainingAborted& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAborted;
  }

  trainer.checkpoint().save((dir / "checkpoint.bin").string());
  std::ostringstream log;
  write_log_csv(log, trainer.log());
  write_text(dir / "train_log.csv", log.str());
  std::ostringstream alloc;
  write_allocation(alloc, trainer.map(), trainer.allocation());
  write_text(dir / "allocation.txt", alloc.str());

  std::cout << "iterations: " << trainer.iteration() << '\n'
            << "beacons: " << beacon_count(trainer.allocation()) << '\n'
            << "validation_rmse: " << fmt_num(trainer.validation_rmse()) << '\n'
            << "checkpoint: " << (dir / "checkpoint.bin").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string locations = "50x35";
  int samples = 10;
  std::string thresholds = "0.1,0.2";
  std::uint64_t seed = 0;
  int threads = 1;
  std::string json;
  int knn = 0;
  std::string db_grid = "50x35";
  int db_samples = 1;
};

int cmd_eval(const EvalArgs& a) {
  const auto [cols, rows] = parse_resolution("--locations", a.locations);
  if (a.samples < 1) throw ConfigError("--samples must be positive");
  if (a.threads < 1) throw ConfigError("--threads must be positive");
  EvalOptions opt;
  opt.grid_cols = cols;
  opt.grid_rows = rows;
  opt.samples = a.samples;
  opt.thresholds = parse_thresholds(a.thresholds);
  opt.seed = a.seed;
  opt.threads = a.threads;

  const Trainer t = load_trainer(a.checkpoint);
  const HardAllocation alloc = t.allocation();
  const auto& params = t.config().propagation;
  EvalReport report;
  if (a.knn > 0) {
    const auto [db_cols, db_rows] = parse_resolution("--db-grid", a.db_grid);
    Rng rng(Rng::derive(a.seed, 0x6b6e6e).next_u64());
    const RssDatabase db = build_database(t.map(), alloc, params, db_rows, db_cols, a.db_samples, rng);
    report = evaluate(knn_predictor(db, a.knn), alloc, t.map(), params, opt);
  } else {
    report = evaluate(network_predictor(t.network()), alloc, t.map(), params, opt);
  }
  std::cout << report_text(report);
  if (!a.json.empty()) write_text(a.json, report_json(report));
  return 0;
}

struct HeatmapArgs {
  std::string checkpoint;
  std::string resolution = "50x35";
  int samples = 10;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
};

int cmd_heatmap(const HeatmapArgs& a) {
  const auto [cols, rows] = parse_resolution("--resolution", a.resolution);
  if (a.samples < 1) throw ConfigError("--samples must be positive");
  if (a.threads < 1) throw ConfigError("--threads must be positive");
  const Trainer t = load_trainer(a.checkpoint);
  const Heatmap h = heatmap(network_predictor(t.network()), t.allocation(), t.map(),
                            t.config().propagation, rows, cols, a.samples, a.seed, a.threads);
  std::ostringstream os;
  write_heatmap_csv(os, h);
  const fs::path out = a.out.empty() ? fs::path(default_out_dir()) / "heatmap.csv" : fs::path(a.out);
  write_text(out, os.str());
  std::cout << "heatmap: " << out.string() << " (" << h.rmse.size() << " cells)\n";
  return 0;
}

int cmd_selfcheck(bool corrupt) {
  SelfCheckOptions opt;
  opt.corrupt_backward = corrupt;
  const SelfCheckReport r = run_selfcheck(opt);
  std::cout << format_selfcheck(r);
  return r.passed() ? 0 : kExitFailure;
}

struct GenmapArgs {
  std::string preset;
  std::string out;
  std::string grid = "10x10";
};

int cmd_genmap(const GenmapArgs& a) {
  const auto [cols, rows] = parse_resolution("--grid", a.grid);
  EnvironmentMap map = [&] {
    try {
      return make_preset(a.preset, rows, cols);
    } catch (const MapError& e) {
      throw ConfigError(e.what());
    }
  }();
  const std::string text = map_to_string(map);
  if (a.out.empty() || a.out == "-") {
    std::cout << text;
  } else {
    write_text(a.out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Beacon placement and localization trainer"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Jointly train placement and localizer");
  train->add_option("--config", ta.config, "key=value config file");
  train->add_option("--override", ta.overrides, "key=value setting (repeatable)");
  train->add_option("--seed", ta.seed, "Random seed")->check(CLI::NonNegativeNumber);
  train->add_option("--out", ta.out, std::string("Output directory (default $") + kOutDirEnv + " or .)");
  train->add_option("--resume", ta.resume, "Continue from a checkpoint");
  train->add_option("--checkpoint-every", ta.checkpoint_every, "Save a checkpoint every N iterations");
  train->add_flag("--quiet", ta.quiet, "No progress lines");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a location grid");
  eval->add_option("--checkpoint", ea.checkpoint)->required();
  eval->add_option("--locations", ea.locations, "Evaluation grid COLSxROWS")->capture_default_str();
  eval->add_option("--samples", ea.samples, "Noise draws per location")->capture_default_str();
  eval->add_option("--thresholds", ea.thresholds, "Failure-rate thresholds")->capture_default_str();
  eval->add_option("--seed", ea.seed)->capture_default_str();
  eval->add_option("--threads", ea.threads)->capture_default_str();
  eval->add_option("--json", ea.json, "Also write the report as JSON");
  eval->add_option("--knn", ea.knn, "Evaluate a k-nearest-neighbour baseline instead");
  eval->add_option("--db-grid", ea.db_grid, "kNN database grid COLSxROWS")->capture_default_str();
  eval->add_option("--db-samples", ea.db_samples, "kNN samples per database cell")->capture_default_str();

  HeatmapArgs ha;
  auto* hm = app.add_subcommand("heatmap", "Per-cell RMSE map as CSV");
  hm->add_option("--checkpoint", ha.checkpoint)->required();
  hm->add_option("--resolution", ha.resolution, "COLSxROWS")->capture_default_str();
  hm->add_option("--samples", ha.samples)->capture_default_str();
  hm->add_option("--seed", ha.seed)->capture_default_str();
  hm->add_option("--threads", ha.threads)->capture_default_str();
  hm->add_option("--out", ha.out, "CSV path");

  bool corrupt = false;
  auto* sc = app.add_subcommand("selfcheck", "Finite-difference gradient checks");
  sc->add_flag("--corrupt-backward", corrupt)->group("");

  GenmapArgs ga;
  auto* gm = app.add_subcommand("genmap", "Write a built-in map");
  gm->add_option("preset", ga.preset, "open | tworoom | corridor")->required();
  gm->add_option("--out", ga.out, "Map file (default stdout)");
  gm->add_option("--grid", ga.grid, "Candidate grid COLSxROWS")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(ea);
    if (*hm) return cmd_heatmap(ha);
    if (*sc) return cmd_selfcheck(corrupt);
    if (*gm) return cmd_genmap(ga);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const TrainingAborted& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAborted;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
