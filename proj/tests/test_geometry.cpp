#include <gtest/gtest.h>

#include <sstream>

#include "beaconopt/geometry.hpp"

using namespace beaconopt;

namespace {

EnvironmentMap one_wall_map() {
  return EnvironmentMap(1.0, 0.7, {{{0.5, 0.0}, {0.5, 0.7}}}, {{0.1, 0.1}});
}

}  // namespace

TEST(MapLoad, GridDirectiveInsetsByHalfCell) {
  const auto m = load_map_string("bounds 1.0 0.7\ngrid 2 2\n");
  ASSERT_EQ(m.num_candidates(), 4u);
  const std::vector<Vec2> expect{{0.25, 0.175}, {0.75, 0.175}, {0.25, 0.525}, {0.75, 0.525}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(m.candidates()[i].x, expect[i].x, 1e-15);
    EXPECT_NEAR(m.candidates()[i].y, expect[i].y, 1e-15);
  }
  EXPECT_TRUE(m.walls().empty());
}

TEST(MapLoad, FullGridHas625Candidates) {
  EXPECT_EQ(load_map_string("bounds 1.0 0.7\ngrid 25 25\n").num_candidates(), 625u);
}

TEST(MapLoad, ZeroWidthIsRejected) {
  try {
    load_map_string("bounds 0 0.7\ngrid 2 2\n");
    FAIL() << "expected a map error";
  } catch (const MapError& e) {
    EXPECT_NE(std::string(e.what()).find("nonpositive width"), std::string::npos);
  }
}

TEST(MapLoad, ParseErrorsCarryLineNumbers) {
  try {
    load_map_string("bounds 1 1\n# comment\nwall 0 0 1\n");
    FAIL();
  } catch (const MapParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(load_map_string("bounds 1 1\ngrid 2 2\nfoo 1\n"), MapParseError);
  EXPECT_THROW(load_map_string("grid 2 2\n"), MapParseError);
  EXPECT_THROW(load_map_string("bounds 1 1\ngrid 2 2\ncandidate 0.5 0.5\n"), MapParseError);
  EXPECT_THROW(load_map_string("bounds 1 1\ncandidate 0.5 abc\n"), MapParseError);
}

TEST(MapLoad, ValidationNamesInvariant) {
  EXPECT_THROW(load_map_string("bounds 1 1\ncandidate 0.5 0.5\ncandidate 0.5 0.5\n"), MapError);
  EXPECT_THROW(load_map_string("bounds 1 1\ncandidate 1.5 0.5\n"), MapError);
  EXPECT_THROW(load_map_string("bounds 1 1\ncandidate 0.5 0.5\nwall 0.2 0.2 0.2 0.2\n"), MapError);
  EXPECT_THROW(load_map_string("bounds 1 1\n"), MapError);
}

TEST(MapLoad, RoundTrip) {
  const std::string src =
      "bounds 1.0 0.7\n"
      "candidate 0.1 0.2\ncandidate 0.30000000000000004 0.6\n"
      "wall 0.5 0 0.5 0.3\n";
  const auto m = load_map_string(src);
  EXPECT_EQ(load_map_string(map_to_string(m)), m);
  for (const auto& name : preset_names()) {
    const auto p = make_preset(name, 7, 9);
    EXPECT_EQ(load_map_string(map_to_string(p)), p) << name;
  }
}

TEST(MapLoad, FileErrorsNamePath) {
  try {
    load_map_file("/nonexistent/dir/x.map");
    FAIL();
  } catch (const MapError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/x.map"), std::string::npos);
  }
}

TEST(Obstruction, SingleCrossing) {
  EXPECT_EQ(obstruction_count(one_wall_map(), {0.25, 0.35}, {0.75, 0.35}), 1);
}

TEST(Obstruction, NoCrossing) {
  EXPECT_EQ(obstruction_count(one_wall_map(), {0.1, 0.1}, {0.2, 0.2}), 0);
}

TEST(Obstruction, TwoWalls) {
  const EnvironmentMap m(1.0, 0.7, {{{0.4, 0.0}, {0.4, 0.7}}, {{0.6, 0.0}, {0.6, 0.7}}},
                         {{0.1, 0.1}});
  EXPECT_EQ(obstruction_count(m, {0.3, 0.35}, {0.7, 0.35}), 2);
}

TEST(Obstruction, GrazingCases) {
  const Segment wall{{0.5, 0.2}, {0.5, 0.5}};
  // Sight line passing through a wall endpoint counts.
  EXPECT_TRUE(blocks_line_of_sight(wall, {0.3, 0.5}, {0.7, 0.5}));
  // Wall endpoint within tolerance of the sight line counts.
  EXPECT_TRUE(blocks_line_of_sight(wall, {0.3, 0.5 + 5e-10}, {0.7, 0.5 + 5e-10}));
  // Wall through p (open segment) does not count.
  EXPECT_FALSE(blocks_line_of_sight(wall, {0.5, 0.3}, {0.9, 0.3}));
  EXPECT_FALSE(blocks_line_of_sight(wall, {0.9, 0.3}, {0.5, 0.3}));
  // Collinear overlap counts once.
  EXPECT_TRUE(blocks_line_of_sight(wall, {0.5, 0.1}, {0.5, 0.6}));
  EXPECT_TRUE(blocks_line_of_sight(wall, {0.5, 0.3}, {0.5, 0.6}));
  // Collinear but disjoint.
  EXPECT_FALSE(blocks_line_of_sight(wall, {0.5, 0.55}, {0.5, 0.65}));
  // Just missing.
  EXPECT_FALSE(blocks_line_of_sight(wall, {0.3, 0.5 + 1e-6}, {0.7, 0.5 + 1e-6}));
}

TEST(Obstruction, SymmetricUnderFuzz) {
  const auto m = make_preset("corridor");
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const auto pts = sample_locations(m, 2, rng);
    ASSERT_EQ(obstruction_count(m, pts[0], pts[1]), obstruction_count(m, pts[1], pts[0]));
  }
  // Grid-aligned points hit the grazing paths more often.
  const auto g = grid_points(1.0, 0.7, 8, 10);
  for (const auto& p : g)
    for (const auto& q : g) ASSERT_EQ(obstruction_count(m, p, q), obstruction_count(m, q, p));
}

TEST(Obstruction, FastPathAgreesWithContactRules) {
  // Endpoints snapped to a coarse lattice that contains the wall coordinates.
  const auto m = make_preset("corridor");
  for (int a = 0; a <= 20; ++a)
    for (int b = 0; b <= 14; ++b)
      for (int c = 0; c <= 20; c += 4)
        for (int d = 0; d <= 14; d += 2) {
          const Vec2 p{a * 0.05, b * 0.05};
          const Vec2 q{c * 0.05, d * 0.05};
          ASSERT_EQ(obstruction_count(m, p, q), obstruction_count(m, q, p));
        }
}

TEST(Sampling, DeterministicAndUniform) {
  const auto m = make_preset("open");
  Rng a(11);
  Rng b(11);
  EXPECT_EQ(sample_locations(m, 3, a), sample_locations(m, 3, b));
  Rng r(5);
  const auto pts = sample_locations(m, 10000, r);
  double sx = 0.0;
  double sy = 0.0;
  for (const auto& p : pts) {
    sx += p.x;
    sy += p.y;
    ASSERT_TRUE(m.contains(p));
  }
  EXPECT_NEAR(sx / 10000, 0.5, 0.02);
  EXPECT_NEAR(sy / 10000, 0.35, 0.02);
  EXPECT_TRUE(sample_locations(m, 0, r).empty());
}

TEST(Grid, DistinctAndInsideForAllSizes) {
  for (int r = 1; r <= 64; ++r) {
    for (int c = 1; c <= 64; c += (r % 7) + 1) {
      // The constructor rejects duplicates and out-of-bounds points.
      const auto m = EnvironmentMap::with_grid(1.0, 0.7, {}, r, c);
      ASSERT_EQ(m.num_candidates(), static_cast<std::size_t>(r * c));
    }
  }
}

TEST(Presets, Shapes) {
  EXPECT_TRUE(make_preset("open").walls().empty());
  const auto t = make_preset("tworoom");
  ASSERT_EQ(t.walls().size(), 2u);
  // One partition with a door: the two pieces are collinear with a gap.
  EXPECT_EQ(t.walls()[0].a.x, t.walls()[1].a.x);
  EXPECT_LT(t.walls()[0].b.y, t.walls()[1].a.y);
  EXPECT_EQ(obstruction_count(t, {0.25, 0.35}, {0.75, 0.35}), 0);  // through the door
  EXPECT_EQ(obstruction_count(t, {0.25, 0.1}, {0.75, 0.1}), 1);
  EXPECT_EQ(make_preset("tworoom").num_candidates(), 100u);
  try {
    make_preset("castle");
    FAIL();
  } catch (const MapError& e) {
    EXPECT_NE(std::string(e.what()).find("tworoom"), std::string::npos);
  }
}

TEST(Spacing, HalfGridSpacing) {
  EXPECT_DOUBLE_EQ(make_preset("open", 10, 10).half_candidate_spacing(), 0.035);
  const EnvironmentMap m(1.0, 1.0, {}, {{0.1, 0.1}, {0.1, 0.5}, {0.9, 0.9}});
  EXPECT_DOUBLE_EQ(m.half_candidate_spacing(), 0.2);
}
