#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "beaconopt/trainer.hpp"

namespace beaconopt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a CLI run needs: training settings plus where the map comes
/// from and where artifacts go.
struct RunConfig {
  TrainConfig train;
  std::string map_path;  // map file; empty when `preset` is used
  std::string preset;    // built-in map name
  int preset_grid_rows = 10;
  int preset_grid_cols = 10;
  std::string out_dir = ".";
};

/// Applies one `key=value` setting. Throws ConfigError for unknown keys or
/// malformed values.
void set_option(RunConfig& cfg, const std::string& key, const std::string& value);
/// Parses "key=value" (surrounding blanks ignored).
void apply_override(RunConfig& cfg, const std::string& assignment);
/// Line-oriented key=value text; `#` starts a comment.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "");
RunConfig load_config_file(const std::string& path, RunConfig base = {});

/// Every training key, in a stable order; parses back to an equal TrainConfig.
std::string format_train_config(const TrainConfig& cfg);
TrainConfig parse_train_config(const std::string& text);

std::vector<std::string> config_keys();

/// Builds the map a run refers to (file or preset).
EnvironmentMap resolve_map(const RunConfig& cfg);

}  // namespace beaconopt
