#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "beaconopt/evaluation.hpp"

using namespace beaconopt;

namespace {

struct Fixture {
  EnvironmentMap map = make_preset("tworoom");
  PropagationParams params = PropagationParams::for_map(map, 4);
  HardAllocation alloc{std::vector<int>(100, 0), 4};
  Fixture() {
    alloc.assignment[0] = 1;
    alloc.assignment[9] = 2;
    alloc.assignment[90] = 3;
    alloc.assignment[99] = 4;
  }
};

// Ignores the measurements and returns a fixed point.
Predictor constant_predictor(Vec2 p) {
  return [p](const Matrix& s) {
    Matrix out(s.rows(), 2);
    out.col(0).setConstant(p.x);
    out.col(1).setConstant(p.y);
    return out;
  };
}

// Cheats by reading the true location through a side channel: the order of
// calls is deterministic, so replaying the location list works.
Predictor oracle_predictor(std::vector<Vec2> locations, int samples) {
  auto cursor = std::make_shared<std::size_t>(0);
  return [=](const Matrix& s) {
    Matrix out(s.rows(), 2);
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const Vec2 v = locations[*cursor / static_cast<std::size_t>(samples)];
      out.row(r) << v.x, v.y;
      ++*cursor;
    }
    return out;
  };
}

}  // namespace

TEST(Summarize, Examples) {
  Matrix e(1, 2);
  e << 0.3, 0.4;
  const auto r = summarize(e, {0.1}, 3);
  EXPECT_NEAR(r.rmse, std::sqrt((0.09 + 0.16) / 2), 1e-15);
  EXPECT_NEAR(r.rmse, 0.35355, 1e-5);
  EXPECT_NEAR(r.worst_case_rmse, 0.4, 1e-15);

  Matrix f(1, 2);
  f << 0.05, 0.15;
  EXPECT_EQ(summarize(f, {0.1}, 0).failure_rates[0].second, 0.5);
  const auto zero = summarize(Matrix::Zero(4, 3), {0.1, 0.2}, 0);
  EXPECT_EQ(zero.rmse, 0.0);
  EXPECT_EQ(zero.failure_rates[0].second, 0.0);
  EXPECT_EQ(zero.failure_rates[1].second, 0.0);
}

TEST(Summarize, InvariantsUnderFuzz) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix e(7, 5);
    for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = rng.uniform(0, 0.5);
    const auto r = summarize(e, {0.05, 0.1, 0.2, 0.4}, 1);
    ASSERT_GE(r.worst_case_rmse, r.rmse);
    for (std::size_t k = 1; k < r.failure_rates.size(); ++k)
      ASSERT_LE(r.failure_rates[k].second, r.failure_rates[k - 1].second);
    for (const auto& [th, rate] : r.failure_rates) {
      ASSERT_GE(rate, 0.0);
      ASSERT_LE(rate, 1.0);
    }
  }
}

TEST(Evaluate, PerfectPredictor) {
  Fixture f;
  EvalOptions opt;
  opt.grid_cols = 5;
  opt.grid_rows = 4;
  opt.samples = 3;
  const auto locs = grid_points(f.map.width(), f.map.height(), 4, 5);
  const auto r = evaluate(oracle_predictor(locs, 3), f.alloc, f.map, f.params, opt);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.worst_case_rmse, 0.0);
  for (const auto& [th, rate] : r.failure_rates) EXPECT_EQ(rate, 0.0);
  EXPECT_EQ(r.n_locations, 20u);
  EXPECT_EQ(r.samples_per_location, 3u);
  EXPECT_EQ(r.beacon_count, 4u);
}

TEST(Evaluate, DeterministicAndThreadIndependent) {
  Fixture f;
  // Measurement-dependent predictor so noise matters.
  const Predictor p = [](const Matrix& s) {
    Matrix out(s.rows(), 2);
    out.col(0) = s.col(0) * 10.0;
    out.col(1) = s.col(1) * 10.0;
    return out;
  };
  EvalOptions opt;
  opt.grid_cols = 20;
  opt.grid_rows = 14;
  opt.samples = 3;
  opt.seed = 5;
  const auto a = evaluate(p, f.alloc, f.map, f.params, opt);
  const auto b = evaluate(p, f.alloc, f.map, f.params, opt);
  opt.threads = 3;
  const auto c = evaluate(p, f.alloc, f.map, f.params, opt);
  EXPECT_EQ(report_text(a), report_text(b));
  EXPECT_EQ(report_text(a), report_text(c));
  opt.seed = 6;
  EXPECT_NE(evaluate(p, f.alloc, f.map, f.params, opt).rmse, a.rmse);
}

TEST(Evaluate, DoublingSamplesIsStatisticallyStable) {
  Fixture f;
  const Predictor p = [](const Matrix& s) {
    Matrix out(s.rows(), 2);
    out.col(0) = (s.col(0) - s.col(1)) * 20.0;
    out.col(1) = (s.col(2) - s.col(3)) * 20.0;
    out.array() += 0.5;
    return out;
  };
  const auto locs = grid_points(f.map.width(), f.map.height(), 10, 14);
  const Matrix e1 = localization_errors(p, f.alloc, f.map, f.params, locs, 10, 1);
  const Matrix e2 = localization_errors(p, f.alloc, f.map, f.params, locs, 20, 2);
  const double r1 = summarize(e1, {}, 0).rmse;
  const double r2 = summarize(e2, {}, 0).rmse;
  // Bootstrap standard error of the RMSE over locations.
  Rng rng(7);
  std::vector<double> boots;
  for (int b = 0; b < 200; ++b) {
    Matrix resampled(e1.rows(), e1.cols());
    for (Eigen::Index i = 0; i < e1.rows(); ++i)
      resampled.row(i) = e1.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(e1.rows()))));
    boots.push_back(summarize(resampled, {}, 0).rmse);
  }
  double mean = 0.0;
  for (double x : boots) mean += x;
  mean /= static_cast<double>(boots.size());
  double var = 0.0;
  for (double x : boots) var += (x - mean) * (x - mean);
  const double se = std::sqrt(var / static_cast<double>(boots.size() - 1));
  EXPECT_LT(std::abs(r1 - r2), 3.0 * se);
}

TEST(Heatmap, PerfectPredictorAndGeometry) {
  Fixture f;
  const auto centers = grid_points(f.map.width(), f.map.height(), 2, 2);
  const auto h = heatmap(oracle_predictor(centers, 2), f.alloc, f.map, f.params, 2, 2, 2, 0);
  ASSERT_EQ(h.rmse.size(), 4u);
  for (double r : h.rmse) EXPECT_EQ(r, 0.0);
  EXPECT_EQ(h.centers[0], (Vec2{0.25, 0.175}));
  EXPECT_DOUBLE_EQ(h.centers[3].x, 0.75);
  EXPECT_DOUBLE_EQ(h.centers[3].y, 0.525);
  EXPECT_THROW(heatmap(constant_predictor({0, 0}), f.alloc, f.map, f.params, 0, 2, 1, 0),
               std::invalid_argument);
}

TEST(Heatmap, AggregateMatchesEvaluate) {
  Fixture f;
  const Predictor p = [](const Matrix& s) {
    Matrix out(s.rows(), 2);
    out.col(0) = s.col(0) * 30.0;
    out.col(1) = s.col(3) * 30.0;
    return out;
  };
  const auto h = heatmap(p, f.alloc, f.map, f.params, 7, 9, 4, 11);
  double sq = 0.0;
  for (double r : h.rmse) sq += r * r;
  const double aggregate = std::sqrt(sq / static_cast<double>(h.rmse.size()));
  EvalOptions opt;
  opt.grid_rows = 7;
  opt.grid_cols = 9;
  opt.samples = 4;
  opt.seed = 11;
  EXPECT_NEAR(aggregate, evaluate(p, f.alloc, f.map, f.params, opt).rmse, 1e-12);
}

TEST(Heatmap, CsvShape) {
  Fixture f;
  const auto h = heatmap(constant_predictor({0.5, 0.35}), f.alloc, f.map, f.params, 35, 50, 1, 0);
  std::ostringstream os;
  write_heatmap_csv(os, h);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "x,y,rmse");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 1750);
}

TEST(Report, TextAndJson) {
  Matrix e(1, 2);
  e << 0.05, 0.15;
  const auto r = summarize(e, {0.1, 0.2}, 4);
  const std::string text = report_text(r);
  EXPECT_NE(text.find("failure_rate(0.1): 0.5"), std::string::npos);
  EXPECT_NE(text.find("failure_rate(0.2): 0"), std::string::npos);
  EXPECT_NE(text.find("beacon_count: 4"), std::string::npos);
  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_EQ(j["beacon_count"], 4);
  EXPECT_EQ(j["failure_rates"].size(), 2u);
  EXPECT_DOUBLE_EQ(j["failure_rates"][0]["rate"].get<double>(), 0.5);
}
