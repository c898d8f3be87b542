#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "beaconopt/allocation.hpp"
#include "beaconopt/evaluation.hpp"
#include "beaconopt/geometry.hpp"
#include "beaconopt/propagation.hpp"

namespace beaconopt {

/// Site-survey fingerprints: row i of `measurements` was recorded at locations[i].
struct RssDatabase {
  Matrix measurements;  // N x C
  std::vector<Vec2> locations;
  PropagationParams params;

  std::size_t size() const { return locations.size(); }
};

/// `samples_per_cell` noisy measurements at each of rows x cols cell centers.
RssDatabase build_database(const EnvironmentMap& map, const HardAllocation& alloc,
                           const PropagationParams& params, int rows, int cols,
                           int samples_per_cell, Rng& rng);

/// Mean location of the k entries nearest to s (Euclidean on raw vectors);
/// equal distances resolve toward the lower entry index.
Vec2 knn_predict(const RssDatabase& db, std::span<const double> s, int k);

Predictor knn_predictor(const RssDatabase& db, int k);

/// Database CSV: `x,y,s_0,...,s_{C-1}`.
void write_database_csv(std::ostream& out, const RssDatabase& db);

struct UniformGrid {
  int stride = 2;
};
struct RandomPlacement {
  std::size_t count = 0;
};

/// Every stride-th candidate row and column (lattice maps; plain index stride
/// otherwise), channels assigned round-robin in selection order.
HardAllocation handcrafted_allocation(const EnvironmentMap& map, int channels, UniformGrid s);
/// `count` distinct candidates drawn uniformly, round-robin channels in draw order.
HardAllocation handcrafted_allocation(const EnvironmentMap& map, int channels, RandomPlacement s,
                                      Rng& rng);

}  // namespace beaconopt
