#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "beaconopt/allocation.hpp"
#include "beaconopt/geometry.hpp"
#include "beaconopt/propagation.hpp"

namespace beaconopt {

/// Maps a batch of measurements (B x C) to location estimates (B x 2).
/// Must treat rows independently.
using Predictor = std::function<Matrix(const Matrix& measurements)>;

struct EvalReport {
  double rmse = 0.0;
  double worst_case_rmse = 0.0;
  /// (threshold, fraction of samples with error > threshold), in input order.
  std::vector<std::pair<double, double>> failure_rates;
  std::size_t beacon_count = 0;
  std::size_t n_locations = 0;
  std::size_t samples_per_location = 0;
};

struct EvalOptions {
  int grid_cols = 50;
  int grid_rows = 35;
  int samples = 10;
  std::vector<double> thresholds{0.10, 0.20};
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Localization errors, one row per location and one column per sample.
/// Location i draws its noise from Rng::derive(seed, i), so results do not
/// depend on `threads`.
Matrix localization_errors(const Predictor& predictor, const HardAllocation& alloc,
                           const EnvironmentMap& map, const PropagationParams& params,
                           std::span<const Vec2> locations, int samples, std::uint64_t seed,
                           int threads = 1);

/// Aggregates an error table into a report.
EvalReport summarize(const Matrix& errors, const std::vector<double>& thresholds,
                     std::size_t beacon_count);

EvalReport evaluate_at(const Predictor& predictor, const HardAllocation& alloc,
                       const EnvironmentMap& map, const PropagationParams& params,
                       std::span<const Vec2> locations, int samples,
                       const std::vector<double>& thresholds, std::uint64_t seed,
                       int threads = 1);

/// Report over a dense grid of cell centers (options.grid_cols x grid_rows).
EvalReport evaluate(const Predictor& predictor, const HardAllocation& alloc,
                    const EnvironmentMap& map, const PropagationParams& params,
                    const EvalOptions& options = {});

struct Heatmap {
  int rows = 0;
  int cols = 0;
  double width = 0.0;
  double height = 0.0;
  std::vector<Vec2> centers;  // row-major, x fastest
  std::vector<double> rmse;   // per cell
};

Heatmap heatmap(const Predictor& predictor, const HardAllocation& alloc,
                const EnvironmentMap& map, const PropagationParams& params, int rows, int cols,
                int samples_per_cell, std::uint64_t seed, int threads = 1);

/// CSV with header `x,y,rmse`.
void write_heatmap_csv(std::ostream& out, const Heatmap& h);
/// `key: value` lines.
std::string report_text(const EvalReport& r);
std::string report_json(const EvalReport& r);

}  // namespace beaconopt
