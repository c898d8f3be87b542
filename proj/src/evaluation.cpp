#include "beaconopt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "beaconopt/numfmt.hpp"

namespace beaconopt {

namespace {

// Locations per predictor call; fixed so results never depend on threading.
constexpr std::size_t kChunk = 32;

void errors_for_chunk(const Predictor& predictor, const HardAllocation& alloc,
                      const EnvironmentMap& map, const PropagationParams& params,
                      std::span<const Vec2> locations, std::size_t begin, std::size_t end,
                      int samples, std::uint64_t seed, Matrix& errors) {
  std::vector<Vec2> locs;
  std::vector<NoiseDraw> noise;
  const auto s = static_cast<std::size_t>(samples);
  locs.reserve((end - begin) * s);
  noise.reserve((end - begin) * s);
  for (std::size_t i = begin; i < end; ++i) {
    Rng rng = Rng::derive(seed, i);
    for (std::size_t k = 0; k < s; ++k) {
      locs.push_back(locations[i]);
      noise.push_back(sample_noise(params, map.num_candidates(), rng));
    }
  }
  const Matrix meas = measure_batch(params, map, alloc, locs, noise);
  const Matrix est = predictor(meas);
  if (est.rows() != meas.rows() || est.cols() != 2)
    throw ShapeError("predictor returned " + shape_str(est) + " for " + shape_str(meas) +
                     " measurements");
  for (std::size_t i = begin; i < end; ++i) {
    for (std::size_t k = 0; k < s; ++k) {
      const auto row = static_cast<Eigen::Index>((i - begin) * s + k);
      const Vec2 v = locations[i];
      errors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          std::hypot(est(row, 0) - v.x, est(row, 1) - v.y);
    }
  }
}

}  // namespace

Matrix localization_errors(const Predictor& predictor, const HardAllocation& alloc,
                           const EnvironmentMap& map, const PropagationParams& params,
                           std::span<const Vec2> locations, int samples, std::uint64_t seed,
                           int threads) {
  if (locations.empty()) throw std::invalid_argument("evaluation needs at least one location");
  if (samples < 1) throw std::invalid_argument("evaluation needs at least one sample");
  Matrix errors(static_cast<Eigen::Index>(locations.size()), samples);
  const std::size_t n_chunks = (locations.size() + kChunk - 1) / kChunk;
  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(locations.size(), begin + kChunk);
    errors_for_chunk(predictor, alloc, map, params, locations, begin, end, samples, seed, errors);
  };

  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n_chunks == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
    return errors;
  }
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < n_chunks; c += workers) run_chunk(c);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return errors;
}

EvalReport summarize(const Matrix& errors, const std::vector<double>& thresholds,
                     std::size_t beacon_count) {
  EvalReport r;
  r.n_locations = static_cast<std::size_t>(errors.rows());
  r.samples_per_location = static_cast<std::size_t>(errors.cols());
  r.beacon_count = beacon_count;
  const double total = static_cast<double>(errors.size());
  r.rmse = std::sqrt(errors.array().square().sum() / total);
  const Eigen::VectorXd worst = errors.rowwise().maxCoeff();
  r.worst_case_rmse = std::sqrt(worst.array().square().mean());
  for (double th : thresholds) {
    const double failures = (errors.array() > th).count();
    r.failure_rates.emplace_back(th, failures / total);
  }
  return r;
}

EvalReport evaluate_at(const Predictor& predictor, const HardAllocation& alloc,
                       const EnvironmentMap& map, const PropagationParams& params,
                       std::span<const Vec2> locations, int samples,
                       const std::vector<double>& thresholds, std::uint64_t seed, int threads) {
  const Matrix errors =
      localization_errors(predictor, alloc, map, params, locations, samples, seed, threads);
  return summarize(errors, thresholds, beacon_count(alloc));
}

EvalReport evaluate(const Predictor& predictor, const HardAllocation& alloc,
                    const EnvironmentMap& map, const PropagationParams& params,
                    const EvalOptions& options) {
  const auto locations =
      grid_points(map.width(), map.height(), options.grid_rows, options.grid_cols);
  return evaluate_at(predictor, alloc, map, params, locations, options.samples,
                     options.thresholds, options.seed, options.threads);
}

Heatmap heatmap(const Predictor& predictor, const HardAllocation& alloc,
                const EnvironmentMap& map, const PropagationParams& params, int rows, int cols,
                int samples_per_cell, std::uint64_t seed, int threads) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("heatmap resolution must be positive");
  Heatmap h;
  h.rows = rows;
  h.cols = cols;
  h.width = map.width();
  h.height = map.height();
  h.centers = grid_points(map.width(), map.height(), rows, cols);
  const Matrix errors = localization_errors(predictor, alloc, map, params, h.centers,
                                            samples_per_cell, seed, threads);
  h.rmse.resize(h.centers.size());
  for (Eigen::Index i = 0; i < errors.rows(); ++i)
    h.rmse[static_cast<std::size_t>(i)] = std::sqrt(errors.row(i).array().square().mean());
  return h;
}

void write_heatmap_csv(std::ostream& out, const Heatmap& h) {
  out << "x,y,rmse\n";
  for (std::size_t i = 0; i < h.centers.size(); ++i)
    out << fmt_num(h.centers[i].x) << ',' << fmt_num(h.centers[i].y) << ',' << fmt_num(h.rmse[i])
        << '\n';
}

std::string report_text(const EvalReport& r) {
  std::ostringstream os;
  os << "rmse: " << fmt_num(r.rmse) << '\n';
  os << "worst_case_rmse: " << fmt_num(r.worst_case_rmse) << '\n';
  for (const auto& [th, rate] : r.failure_rates)
    os << "failure_rate(" << fmt_num(th) << "): " << fmt_num(rate) << '\n';
  os << "beacon_count: " << r.beacon_count << '\n';
  os << "n_locations: " << r.n_locations << '\n';
  os << "samples_per_location: " << r.samples_per_location << '\n';
  return os.str();
}

std::string report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["rmse"] = r.rmse;
  j["worst_case_rmse"] = r.worst_case_rmse;
  auto& fr = j["failure_rates"] = nlohmann::ordered_json::array();
  for (const auto& [th, rate] : r.failure_rates) fr.push_back({{"threshold", th}, {"rate", rate}});
  j["beacon_count"] = r.beacon_count;
  j["n_locations"] = r.n_locations;
  j["samples_per_location"] = r.samples_per_location;
  return j.dump(2) + "\n";
}

}  // namespace beaconopt
