#include "beaconopt/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "beaconopt/numfmt.hpp"

namespace beaconopt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

template <class Int>
Int to_int(const std::string& key, const std::string& v) {
  Int x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

// "auto" selects the derived default (-1 for counts, 0 for r_min).
std::int64_t to_auto_int(const std::string& key, const std::string& v) {
  return v == "auto" ? -1 : to_int<std::int64_t>(key, v);
}
double to_auto_double(const std::string& key, const std::string& v, double auto_value) {
  return v == "auto" ? auto_value : to_double(key, v);
}
std::string auto_int(std::int64_t v) { return v < 0 ? "auto" : std::to_string(v); }

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& v)>;
using Getter = std::function<std::string(const TrainConfig&)>;

struct Field {
  Setter set;
  Getter get;  // empty for run-only keys
};

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f = [] {
    std::vector<std::pair<std::string, Field>> v;
    auto dbl = [&v](const std::string& name, double TrainConfig::*member) {
      v.push_back({name, {[member](RunConfig& c, const std::string& k, const std::string& s) {
                            c.train.*member = to_double(k, s);
                          },
                          [member](const TrainConfig& c) { return fmt_num(c.*member); }}});
    };
    auto add = [&v](const std::string& name, Setter s, Getter g) {
      v.push_back({name, {std::move(s), std::move(g)}});
    };
    add("iterations",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.iterations = to_int<std::int64_t>(k, s); },
        [](const TrainConfig& c) { return std::to_string(c.iterations); });
    add("switch_iter",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.alpha.switch_iter = to_auto_int(k, s); },
        [](const TrainConfig& c) { return auto_int(c.alpha.switch_iter); });
    add("finetune_iters",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.finetune_iters = to_auto_int(k, s); },
        [](const TrainConfig& c) { return auto_int(c.finetune_iters); });
    add("batch", [](RunConfig& c, const auto& k, const auto& s) { c.train.batch = to_int<int>(k, s); },
        [](const TrainConfig& c) { return std::to_string(c.batch); });
    dbl("lr", &TrainConfig::lr);
    dbl("lr_finetune", &TrainConfig::lr_finetune);
    dbl("momentum", &TrainConfig::momentum);
    dbl("weight_lr_mult", &TrainConfig::weight_lr_mult);
    dbl("init_std", &TrainConfig::init_std);
    add("alpha0",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.alpha.alpha0 = to_double(k, s); },
        [](const TrainConfig& c) { return fmt_num(c.alpha.alpha0); });
    add("gamma",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.alpha.gamma = to_auto_double(k, s, -1.0); },
        [](const TrainConfig& c) { return c.alpha.gamma < 0 ? std::string("auto") : fmt_num(c.alpha.gamma); });
    dbl("alpha_at_switch", &TrainConfig::alpha_at_switch);
    add("lambda0",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.lambda.lambda0 = to_double(k, s); },
        [](const TrainConfig& c) { return fmt_num(c.lambda.lambda0); });
    add("lambda_eta",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.lambda.eta = to_double(k, s); },
        [](const TrainConfig& c) { return fmt_num(c.lambda.eta); });
    add("lambda_period",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.lambda.period = to_auto_int(k, s); },
        [](const TrainConfig& c) { return auto_int(c.lambda.period); });
    add("lambda_mode",
        [](RunConfig& c, const auto& k, const auto& s) {
          if (s == "fixed") c.train.lambda.mode = LambdaMode::kFixed;
          else if (s == "annealed") c.train.lambda.mode = LambdaMode::kAnnealed;
          else throw ConfigError(k + ": expected fixed or annealed, got '" + s + "'");
        },
        [](const TrainConfig& c) { return to_string(c.lambda.mode); });
    add("reg_sign",
        [](RunConfig& c, const auto& k, const auto& s) {
          if (s == "paper_verbatim") c.train.reg_sign = RegSign::kPaperVerbatim;
          else if (s == "beacon_penalty") c.train.reg_sign = RegSign::kBeaconPenalty;
          else throw ConfigError(k + ": expected paper_verbatim or beacon_penalty, got '" + s + "'");
        },
        [](const TrainConfig& c) { return to_string(c.reg_sign); });
    add("seed", [](RunConfig& c, const auto& k, const auto& s) { c.train.seed = to_int<std::uint64_t>(k, s); },
        [](const TrainConfig& c) { return std::to_string(c.seed); });
    add("channels",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.propagation.channels = to_int<int>(k, s); },
        [](const TrainConfig& c) { return std::to_string(c.propagation.channels); });
    add("blocks", [](RunConfig& c, const auto& k, const auto& s) { c.train.arch.blocks = to_int<int>(k, s); },
        [](const TrainConfig& c) { return std::to_string(c.arch.blocks); });
    add("hidden", [](RunConfig& c, const auto& k, const auto& s) { c.train.arch.hidden = to_int<int>(k, s); },
        [](const TrainConfig& c) { return std::to_string(c.arch.hidden); });
    add("pool_group",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.arch.pool_group = to_int<int>(k, s); },
        [](const TrainConfig& c) { return std::to_string(c.arch.pool_group); });
    auto prop = [&add](const std::string& name, double PropagationParams::*member) {
      add(name,
          [member](RunConfig& c, const std::string& k, const std::string& s) {
            c.train.propagation.*member = to_double(k, s);
          },
          [member](const TrainConfig& c) { return fmt_num(c.propagation.*member); });
    };
    prop("p0", &PropagationParams::p0);
    prop("zeta", &PropagationParams::zeta);
    prop("beta", &PropagationParams::beta);
    prop("noise_var", &PropagationParams::noise_var);
    prop("tau", &PropagationParams::tau);
    add("r_min",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.propagation.r_min = to_auto_double(k, s, 0.0); },
        [](const TrainConfig& c) {
          return c.propagation.r_min <= 0 ? std::string("auto") : fmt_num(c.propagation.r_min);
        });
    add("eval_cadence",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.eval_cadence = to_auto_int(k, s); },
        [](const TrainConfig& c) { return auto_int(c.eval_cadence); });
    add("val_rows", [](RunConfig& c, const auto& k, const auto& s) { c.train.val_rows = to_int<int>(k, s); },
        [](const TrainConfig& c) { return std::to_string(c.val_rows); });
    add("val_cols", [](RunConfig& c, const auto& k, const auto& s) { c.train.val_cols = to_int<int>(k, s); },
        [](const TrainConfig& c) { return std::to_string(c.val_cols); });
    add("placement",
        [](RunConfig& c, const auto& k, const auto& s) {
          if (s == "joint") c.train.placement = Placement::kJoint;
          else if (s == "random") c.train.placement = Placement::kRandom;
          else if (s == "grid") c.train.placement = Placement::kGrid;
          else throw ConfigError(k + ": expected joint, random or grid, got '" + s + "'");
        },
        [](const TrainConfig& c) { return to_string(c.placement); });
    add("random_count",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.random_count = to_int<std::size_t>(k, s); },
        [](const TrainConfig& c) { return std::to_string(c.random_count); });
    add("grid_stride",
        [](RunConfig& c, const auto& k, const auto& s) { c.train.grid_stride = to_int<int>(k, s); },
        [](const TrainConfig& c) { return std::to_string(c.grid_stride); });

    // Run-level keys (not part of a training checkpoint's config record).
    add("map", [](RunConfig& c, const auto&, const auto& s) { c.map_path = s; }, {});
    add("preset", [](RunConfig& c, const auto&, const auto& s) { c.preset = s; }, {});
    add("preset_grid",
        [](RunConfig& c, const auto& k, const auto& s) {
          const auto x = s.find('x');
          if (x == std::string::npos) throw ConfigError(k + ": expected COLSxROWS, got '" + s + "'");
          c.preset_grid_cols = to_int<int>(k, s.substr(0, x));
          c.preset_grid_rows = to_int<int>(k, s.substr(x + 1));
        },
        {});
    add("out_dir", [](RunConfig& c, const auto&, const auto& s) { c.out_dir = s; }, {});
    return v;
  }();
  return f;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : fields())
    if (name == key) return &field;
  return nullptr;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> k;
  for (const auto& [name, field] : fields()) k.push_back(name);
  return k;
}

void set_option(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  f->set(cfg, key, value);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("expected key=value, got '" + assignment + "'");
  set_option(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (trim(line).empty()) continue;
    try {
      apply_override(cfg, line);
    } catch (const ConfigError& e) {
      throw ConfigError((origin.empty() ? "" : origin + ":") + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string before = base.map_path;
  apply_config_text(base, ss.str(), path);
  // A relative map path inside a config file is taken relative to that file.
  if (base.map_path != before && !base.map_path.empty()) {
    const std::filesystem::path mp(base.map_path);
    if (mp.is_relative())
      base.map_path = (std::filesystem::path(path).parent_path() / mp).lexically_normal().string();
  }
  return base;
}

std::string format_train_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [name, field] : fields())
    if (field.get) out += name + "=" + field.get(cfg) + "\n";
  return out;
}

TrainConfig parse_train_config(const std::string& text) {
  RunConfig rc;
  apply_config_text(rc, text);
  // input_dim is not a key of its own; it always tracks the channel count.
  rc.train.arch.input_dim = rc.train.propagation.channels;
  return rc.train;
}

EnvironmentMap resolve_map(const RunConfig& cfg) {
  if (!cfg.map_path.empty()) return load_map_file(cfg.map_path);
  if (!cfg.preset.empty()) return make_preset(cfg.preset, cfg.preset_grid_rows, cfg.preset_grid_cols);
  throw ConfigError("config names neither a map file nor a preset");
}

}  // namespace beaconopt
