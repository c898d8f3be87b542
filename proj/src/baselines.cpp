#include "beaconopt/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "beaconopt/numfmt.hpp"

namespace beaconopt {

RssDatabase build_database(const EnvironmentMap& map, const HardAllocation& alloc,
                           const PropagationParams& params, int rows, int cols,
                           int samples_per_cell, Rng& rng) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("database resolution must be positive");
  if (samples_per_cell < 1) throw std::invalid_argument("samples_per_cell must be positive");
  RssDatabase db;
  db.params = params;
  std::vector<NoiseDraw> noise;
  for (const Vec2 c : grid_points(map.width(), map.height(), rows, cols)) {
    for (int k = 0; k < samples_per_cell; ++k) {
      db.locations.push_back(c);
      noise.push_back(sample_noise(params, map.num_candidates(), rng));
    }
  }
  db.measurements = measure_batch(params, map, alloc, db.locations, noise);
  return db;
}

Vec2 knn_predict(const RssDatabase& db, std::span<const double> s, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > db.size())
    throw std::out_of_range("knn_predict: k = " + std::to_string(k) + " outside [1, " +
                            std::to_string(db.size()) + "]");
  if (static_cast<Eigen::Index>(s.size()) != db.measurements.cols())
    throw std::invalid_argument("knn_predict: measurement width does not match database");
  const Eigen::Map<const Eigen::RowVectorXd> q(s.data(), static_cast<Eigen::Index>(s.size()));
  std::vector<std::pair<double, std::size_t>> d(db.size());
  for (std::size_t i = 0; i < db.size(); ++i)
    d[i] = {(db.measurements.row(static_cast<Eigen::Index>(i)) - q).squaredNorm(), i};
  std::partial_sort(d.begin(), d.begin() + k, d.end());
  Vec2 mean{};
  for (int i = 0; i < k; ++i) mean = mean + db.locations[d[static_cast<std::size_t>(i)].second];
  return (1.0 / k) * mean;
}

Predictor knn_predictor(const RssDatabase& db, int k) {
  return [&db, k](const Matrix& batch) {
    Matrix out(batch.rows(), 2);
    for (Eigen::Index r = 0; r < batch.rows(); ++r) {
      const Vec2 v = knn_predict(
          db, std::span<const double>(batch.row(r).data(), static_cast<std::size_t>(batch.cols())),
          k);
      out(r, 0) = v.x;
      out(r, 1) = v.y;
    }
    return out;
  };
}

void write_database_csv(std::ostream& out, const RssDatabase& db) {
  out << "x,y";
  for (Eigen::Index c = 0; c < db.measurements.cols(); ++c) out << ",s_" << c;
  out << '\n';
  for (std::size_t i = 0; i < db.size(); ++i) {
    out << fmt_num(db.locations[i].x) << ',' << fmt_num(db.locations[i].y);
    for (Eigen::Index c = 0; c < db.measurements.cols(); ++c)
      out << ',' << fmt_num(db.measurements(static_cast<Eigen::Index>(i), c));
    out << '\n';
  }
}

namespace {

HardAllocation round_robin(std::size_t L, int channels, const std::vector<std::size_t>& picks) {
  if (channels < 1) throw std::invalid_argument("channels must be at least 1");
  HardAllocation h;
  h.channels = channels;
  h.assignment.assign(L, 0);
  for (std::size_t i = 0; i < picks.size(); ++i)
    h.assignment[picks[i]] = static_cast<int>(i % static_cast<std::size_t>(channels)) + 1;
  return h;
}

}  // namespace

HardAllocation handcrafted_allocation(const EnvironmentMap& map, int channels, UniformGrid s) {
  if (s.stride < 1) throw std::invalid_argument("grid stride must be at least 1");
  std::vector<std::size_t> picks;
  if (const auto& g = map.grid()) {
    for (int i = 0; i < g->rows; i += s.stride)
      for (int j = 0; j < g->cols; j += s.stride)
        picks.push_back(static_cast<std::size_t>(i) * static_cast<std::size_t>(g->cols) +
                        static_cast<std::size_t>(j));
  } else {
    for (std::size_t l = 0; l < map.num_candidates(); l += static_cast<std::size_t>(s.stride))
      picks.push_back(l);
  }
  return round_robin(map.num_candidates(), channels, picks);
}

HardAllocation handcrafted_allocation(const EnvironmentMap& map, int channels, RandomPlacement s,
                                      Rng& rng) {
  const std::size_t L = map.num_candidates();
  if (s.count > L)
    throw std::invalid_argument("random placement of " + std::to_string(s.count) +
                                " beacons exceeds " + std::to_string(L) + " candidates");
  std::vector<std::size_t> idx(L);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: the first `count` entries are the draw order.
  for (std::size_t i = 0; i < s.count; ++i) std::swap(idx[i], idx[i + rng.below(L - i)]);
  idx.resize(s.count);
  return round_robin(L, channels, idx);
}

}  // namespace beaconopt
