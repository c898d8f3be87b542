#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "beaconopt/allocation.hpp"
#include "beaconopt/propagation.hpp"

using namespace beaconopt;

namespace {

PropagationParams defaults(int channels = 4) {
  PropagationParams p;
  p.channels = channels;
  p.r_min = 0.01;
  return p;
}

// Beacons at x = 0.25 and x = 0.75 on the mid line; receiver at the centre,
// so both sit at r = 0.25.
EnvironmentMap pair_map(std::vector<Segment> walls = {}) {
  return EnvironmentMap(1.0, 0.7, std::move(walls), {{0.25, 0.35}, {0.75, 0.35}});
}

}  // namespace

TEST(ReceivedPower, Examples) {
  const auto p = defaults();
  const auto open = pair_map();
  EXPECT_NEAR(received_power(p, open, {0.25, 0.35}, {0.5, 0.35}), 0.01, 1e-15);
  const auto walled = pair_map({{{0.4, 0.0}, {0.4, 0.7}}});
  EXPECT_NEAR(received_power(p, walled, {0.25, 0.35}, {0.5, 0.35}), 0.0036788, 1e-7);
  EXPECT_NEAR(received_power(p, open, {0.0, 0.35}, {1.0, 0.35}), 6.25e-4, 1e-18);
}

TEST(ReceivedPower, ClampsAtRmin) {
  auto p = defaults();
  p.r_min = 0.05;
  const auto m = pair_map();
  const double at_rmin = received_power(p, m, {0.25, 0.35}, {0.30, 0.35});
  EXPECT_DOUBLE_EQ(received_power(p, m, {0.25, 0.35}, {0.25, 0.35}), at_rmin);
  EXPECT_DOUBLE_EQ(received_power(p, m, {0.25, 0.35}, {0.27, 0.35}), at_rmin);
}

TEST(ReceivedPower, MonotoneInDistance) {
  const auto p = defaults();
  const auto m = pair_map({{{0.5, 0.0}, {0.5, 0.7}}});
  double prev = received_power(p, m, {0.25, 0.35}, {0.55, 0.35});
  for (double x = 0.56; x <= 1.0; x += 0.01) {
    const double cur = received_power(p, m, {0.25, 0.35}, {x, 0.35});
    ASSERT_LE(cur, prev);
    prev = cur;
  }
}

TEST(Measure, SingleBeaconAnyPhase) {
  const auto p = defaults();
  const auto m = pair_map();
  HardAllocation a{{1, 0}, 4};
  for (double phi : {0.0, 1.0, 2.5, 6.0}) {
    const auto s = measure(p, m, a, {0.5, 0.35}, noiseless({phi, 0.3}, 4));
    EXPECT_NEAR(s.s[0], 0.01, 1e-15);
    EXPECT_EQ(s.s[1], 0.0);
    EXPECT_EQ(s.s[2], 0.0);
    EXPECT_EQ(s.s[3], 0.0);
  }
}

TEST(Measure, Interference) {
  const auto p = defaults();
  const auto m = pair_map();
  HardAllocation a{{1, 1}, 4};
  const double power = received_power(p, m, {0.25, 0.35}, {0.5, 0.35});
  const double amp = std::sqrt(power);
  const auto constructive = measure(p, m, a, {0.5, 0.35}, noiseless({0.0, 0.0}, 4));
  EXPECT_EQ(constructive.s[0], (amp + amp) * (amp + amp));
  EXPECT_NEAR(constructive.s[0], 0.04, 1e-15);
  const auto destructive =
      measure(p, m, a, {0.5, 0.35}, noiseless({0.0, std::numbers::pi}, 4));
  EXPECT_NEAR(destructive.s[0], 0.0, 1e-30);
}

TEST(Measure, Saturates) {
  auto p = defaults();
  p.tau = 0.02;
  const auto m = pair_map();
  HardAllocation a{{1, 1}, 4};
  const auto s = measure(p, m, a, {0.5, 0.35}, noiseless({0.0, 0.0}, 4));
  EXPECT_EQ(s.s[0], 0.02);
}

TEST(Measure, RelaxedMatchesHardBitwise) {
  const auto m = EnvironmentMap::with_grid(1.0, 0.7, {{{0.5, 0.0}, {0.5, 0.3}}}, 5, 5);
  auto p = PropagationParams::for_map(m, 3);
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    HardAllocation a;
    a.channels = 3;
    for (std::size_t l = 0; l < m.num_candidates(); ++l)
      a.assignment.push_back(static_cast<int>(rng.below(4)));
    const Vec2 v = sample_locations(m, 1, rng)[0];
    const auto nd = sample_noise(p, m.num_candidates(), rng);
    const auto hard = measure(p, m, a, v, nd);
    Tape t;
    const Matrix soft = measure_relaxed(p, m, t.constant(one_hot(a)), v, nd).value();
    for (int c = 0; c < 3; ++c) ASSERT_EQ(hard.s[static_cast<std::size_t>(c)], soft(0, c));
  }
}

TEST(Measure, SoftWeightScalesAmplitude) {
  const auto p = defaults(1);
  const EnvironmentMap m(1.0, 0.7, {}, {{0.25, 0.35}});
  Tape t;
  Matrix rows(1, 2);
  rows << 0.5, 0.5;
  const Matrix s = measure_relaxed(p, m, t.constant(rows), {0.5, 0.35}, noiseless({0.7}, 1)).value();
  EXPECT_NEAR(s(0, 0), 0.0025, 1e-15);

  Matrix none(1, 2);
  none << 1.0, 0.0;
  EXPECT_EQ(measure_relaxed(p, m, t.constant(none), {0.5, 0.35}, noiseless({0.7}, 1)).value()(0, 0),
            0.0);
}

TEST(Measure, SaturationBoundFuzz) {
  const auto m = make_preset("corridor", 6, 6);
  auto p = PropagationParams::for_map(m, 4);
  p.tau = 0.05;
  p.noise_var = 1e-2;
  Rng rng(12);
  std::vector<Vec2> locs = sample_locations(m, 100000, rng);
  std::vector<NoiseDraw> noise;
  noise.reserve(locs.size());
  for (std::size_t i = 0; i < locs.size(); ++i) noise.push_back(sample_noise(p, m.num_candidates(), rng));
  HardAllocation a;
  a.channels = 4;
  for (std::size_t l = 0; l < m.num_candidates(); ++l) a.assignment.push_back(static_cast<int>(l % 5));
  const auto inputs = measurement_inputs(p, m, locs, noise);
  Tape t;
  const Matrix s = measure_rows(p, inputs, t.constant(one_hot(a))).value();
  EXPECT_GE(s.minCoeff(), 0.0);
  EXPECT_LE(s.maxCoeff(), p.tau);
}

TEST(Measure, PhaseInvarianceSingleBeaconPerChannel) {
  const auto m = make_preset("tworoom", 6, 6);
  const auto p = PropagationParams::for_map(m, 4);
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    HardAllocation a;
    a.channels = 4;
    a.assignment.assign(m.num_candidates(), 0);
    std::vector<std::size_t> chosen;
    for (int c = 0; c < 4; ++c) {
      std::size_t l;
      do l = rng.below(m.num_candidates());
      while (a.assignment[l] != 0);
      a.assignment[l] = c + 1;
      chosen.push_back(l);
    }
    const Vec2 v = sample_locations(m, 1, rng)[0];
    std::vector<double> ph1(m.num_candidates());
    std::vector<double> ph2(m.num_candidates());
    for (auto& x : ph1) x = 2 * std::numbers::pi * rng.uniform();
    for (auto& x : ph2) x = 2 * std::numbers::pi * rng.uniform();
    const auto s1 = measure(p, m, a, v, noiseless(ph1, 4));
    const auto s2 = measure(p, m, a, v, noiseless(ph2, 4));
    for (int c = 0; c < 4; ++c) ASSERT_NEAR(s1.s[static_cast<std::size_t>(c)], s2.s[static_cast<std::size_t>(c)], 1e-12);
  }
}

TEST(Measure, GradientWrtWeights) {
  const auto m = make_preset("tworoom", 4, 4);
  const auto p = PropagationParams::for_map(m, 2);
  Rng rng(21);
  int checked = 0;
  for (int cfg = 0; cfg < 150 && checked < 100; ++cfg) {
    const Matrix w = init_allocation_weights(m.num_candidates(), 2, rng, 0.7);
    const double alpha = rng.uniform(0.5, 2.0);
    const Vec2 v = sample_locations(m, 1, rng)[0];
    const auto nd = sample_noise(p, m.num_candidates(), rng);
    Tape probe;
    const Matrix s = measure_relaxed(p, m, relax(probe.constant(w), alpha), v, nd).value();
    if ((s.array() >= p.tau - 1e-3).any()) continue;
    const Matrix coeff = Matrix::Random(1, 2);
    const auto r = finite_diff_check(
        [&](Tape& t, const Var& x) {
          return sum(mul(measure_relaxed(p, m, relax(x, alpha), v, nd), t.constant(coeff)));
        },
        w, 1e-5);
    ASSERT_LT(r.max_rel_error, 1e-4) << "config " << cfg;
    ++checked;
  }
  EXPECT_GE(checked, 100);
}

TEST(Noise, ShapesAndDeterminism) {
  PropagationParams p = defaults(3);
  Rng a(1);
  Rng b(1);
  const auto n1 = sample_noise(p, 7, a);
  const auto n2 = sample_noise(p, 7, b);
  EXPECT_EQ(n1.phases, n2.phases);
  EXPECT_EQ(n1.eps1, n2.eps1);
  ASSERT_EQ(n1.phases.size(), 7u);
  ASSERT_EQ(n1.eps1.size(), 3u);
  for (double ph : n1.phases) {
    EXPECT_GE(ph, 0.0);
    EXPECT_LT(ph, 2 * std::numbers::pi);
  }
}

TEST(Params, Validation) {
  PropagationParams p = defaults();
  EXPECT_NO_THROW(p.validate());
  p.beta = 1.5;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = defaults();
  p.r_min = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = defaults();
  p.channels = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}
