#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "beaconopt/allocation.hpp"

using namespace beaconopt;

TEST(Relax, Examples) {
  const auto uniform = relax(Matrix::Zero(1, 5), 1.0);
  for (int c = 0; c < 5; ++c) EXPECT_NEAR(uniform.rows(0, c), 0.2, 1e-15);

  Matrix w(1, 3);
  w << 1, 0, 0;
  const auto sharp = relax(w, 1000.0);
  EXPECT_NEAR(sharp.rows(0, 0), 1.0, 1e-9);
  EXPECT_NEAR(sharp.rows(0, 1), 0.0, 1e-9);

  Matrix l(1, 2);
  l << std::log(2.0), 0;
  const auto r = relax(l, 1.0);
  EXPECT_NEAR(r.rows(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.rows(0, 1), 1.0 / 3.0, 1e-15);

  EXPECT_THROW(relax(w, 0.0), std::invalid_argument);
  Tape t;
  EXPECT_THROW(relax(t.leaf(w), -1.0), std::invalid_argument);
}

TEST(Relax, RowsArePositiveProbabilities) {
  Rng rng(2);
  const Matrix w = init_allocation_weights(50, 4, rng, 3.0);
  for (double alpha : {0.1, 1.0, 10.0}) {
    const auto r = relax(w, alpha);
    EXPECT_LT((r.rows.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
    EXPECT_GT(r.rows.minCoeff(), 0.0);
  }
}

TEST(Relax, ShiftInvariance) {
  Rng rng(3);
  const Matrix w = init_allocation_weights(20, 3, rng, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const double c = rng.uniform(-50, 50);
    const Matrix shifted = (w.array() + c).matrix();
    EXPECT_LT((relax(shifted, 2.0).rows - relax(w, 2.0).rows).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Relax, EntropyNonIncreasingInAlpha) {
  Rng rng(4);
  const Matrix w = init_allocation_weights(30, 4, rng, 1.0);
  auto entropy = [](const Matrix& rows, Eigen::Index i) {
    double h = 0.0;
    for (Eigen::Index c = 0; c < rows.cols(); ++c) h -= rows(i, c) * std::log(rows(i, c));
    return h;
  };
  const std::vector<double> alphas{0.1, 1.0, 10.0, 100.0};
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    double prev = std::numeric_limits<double>::infinity();
    for (double a : alphas) {
      const auto r = relax(w, a);
      double h = entropy(r.rows, i);
      if (std::isnan(h)) h = 0.0;
      ASSERT_LE(h, prev + 1e-12);
      prev = h;
    }
  }
}

TEST(Harden, Examples) {
  Matrix rows(1, 3);
  rows << 0.1, 0.7, 0.2;
  EXPECT_EQ(harden(rows).assignment, std::vector<int>{1});
  EXPECT_EQ(harden(Matrix::Constant(1, 5, 0.2)).assignment, std::vector<int>{0});
  EXPECT_EQ(harden(rows).channels, 2);
}

TEST(Harden, RoundTripAndAlphaIndependence) {
  Rng rng(5);
  const Matrix w = init_allocation_weights(40, 4, rng, 1.0);
  const HardAllocation h = harden(w);
  for (double a : {0.1, 1.0, 50.0}) EXPECT_EQ(harden(relax(w, a).rows), h);
  // re-relax the hard rows at a huge alpha
  const auto back = relax(one_hot(h), 1e6);
  EXPECT_LT((back.rows - one_hot(h)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Schedules, Alpha) {
  AlphaSchedule s;
  EXPECT_EQ(alpha_at(s, 0), 1.0);
  EXPECT_EQ(alpha_at(s, 900000), 1013.5);
  s.gamma = 0.0;
  EXPECT_EQ(alpha_at(s, 123456), 1.0);
  AlphaSchedule t{2.0, 1e-6, 100};
  double prev = 0.0;
  for (std::int64_t i = 0; i < 100; ++i) {
    ASSERT_GT(alpha_at(t, i), prev);
    prev = alpha_at(t, i);
  }
}

TEST(Schedules, Lambda) {
  LambdaSchedule s;
  EXPECT_EQ(lambda_at(s, 0), 0.2);
  EXPECT_EQ(lambda_at(s, 100000), 0.05);
  EXPECT_EQ(lambda_at(s, 200000), 0.0125);
  EXPECT_EQ(lambda_at(s, 99999), 0.2);
  s.mode = LambdaMode::kFixed;
  EXPECT_EQ(lambda_at(s, 500000), 0.2);
  LambdaSchedule a;
  double prev = lambda_at(a, 0);
  for (std::int64_t t = 0; t < 1000000; t += 7919) {
    ASSERT_LE(lambda_at(a, t), prev);
    prev = lambda_at(a, t);
  }
}

TEST(Regularizer, Examples) {
  Tape t;
  Matrix none = Matrix::Zero(625, 5);
  none.col(0).setOnes();
  EXPECT_NEAR(regularizer(t.constant(none), 0.2, RegSign::kPaperVerbatim).scalar(), 125.0, 1e-9);
  EXPECT_EQ(regularizer(t.constant(none), 0.2, RegSign::kBeaconPenalty).scalar(), 0.0);
  EXPECT_EQ(regularizer(t.constant(none), 0.0, RegSign::kPaperVerbatim).scalar(), 0.0);
  Matrix two(2, 2);
  two << 0.3, 0.7, 0.5, 0.5;
  EXPECT_NEAR(regularizer(t.constant(two), 1.0, RegSign::kPaperVerbatim).scalar(), 0.8, 1e-15);
  EXPECT_NEAR(regularizer(t.constant(two), 1.0, RegSign::kBeaconPenalty).scalar(), 1.2, 1e-15);
}

TEST(Regularizer, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  const Matrix w = init_allocation_weights(12, 3, rng, 1.0);
  for (RegSign sign : {RegSign::kPaperVerbatim, RegSign::kBeaconPenalty}) {
    const auto r = finite_diff_check(
        [sign](Tape&, const Var& x) { return regularizer(relax(x, 1.7), 0.3, sign); }, w, 1e-5);
    EXPECT_LT(r.max_rel_error, 1e-6);
  }
}

TEST(Counts, Examples) {
  EXPECT_EQ(beacon_count(HardAllocation{{0, 0, 3, 1}, 3}), 2u);
  EXPECT_NEAR(expected_beacon_count(Matrix::Constant(10, 5, 0.2)), 8.0, 1e-12);
  HardAllocation h{{0, 2, 1, 0, 4}, 4};
  EXPECT_EQ(expected_beacon_count(one_hot(h)), static_cast<double>(beacon_count(h)));
}

TEST(HardAllocation, ValidationAndText) {
  EXPECT_THROW((HardAllocation{{0, 5}, 4}.validate()), std::invalid_argument);
  EXPECT_THROW((HardAllocation{{-1}, 4}.validate()), std::invalid_argument);
  const auto map = EnvironmentMap::with_grid(1.0, 0.7, {}, 2, 2);
  const HardAllocation a{{0, 1, 4, 2}, 4};
  std::ostringstream os;
  write_allocation(os, map, a);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "0 0.25 0.175 0");
  std::istringstream is(os.str());
  EXPECT_EQ(read_allocation(is, 4), a);
}
