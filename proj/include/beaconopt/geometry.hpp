#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "beaconopt/rng.hpp"

namespace beaconopt {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

double dot(Vec2 a, Vec2 b);
double cross(Vec2 a, Vec2 b);
double norm(Vec2 a);
double distance(Vec2 a, Vec2 b);

struct Segment {
  Vec2 a;
  Vec2 b;
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Distance from p to the closed segment s.
double point_segment_distance(Vec2 p, const Segment& s);

/// Tolerance (map-units) for grazing contacts in line-of-sight tests.
inline constexpr double kContactTolerance = 1e-9;

class MapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse failure; line() is 1-based, 0 when the error is not tied to a line.
class MapParseError : public MapError {
 public:
  MapParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Rectangular floor plan [0,width]x[0,height] with zero-area wall segments
/// and the candidate beacon sites. Immutable after construction.
class EnvironmentMap {
 public:
  struct GridSpec {
    int rows = 0;
    int cols = 0;
    friend bool operator==(const GridSpec&, const GridSpec&) = default;
  };

  /// Validates every invariant; throws MapError naming the violated one.
  EnvironmentMap(double width, double height, std::vector<Segment> walls,
                 std::vector<Vec2> candidates);

  /// Candidates as a rows x cols lattice inset by half a cell, row-major
  /// (x varies fastest).
  static EnvironmentMap with_grid(double width, double height, std::vector<Segment> walls,
                                  int rows, int cols);

  double width() const { return width_; }
  double height() const { return height_; }
  const std::vector<Segment>& walls() const { return walls_; }
  const std::vector<Vec2>& candidates() const { return candidates_; }
  std::size_t num_candidates() const { return candidates_.size(); }
  const std::optional<GridSpec>& grid() const { return grid_; }

  /// Half the smallest distance between two candidates (half the grid
  /// spacing for lattice maps). Half of min(width, height) with one candidate.
  double half_candidate_spacing() const;

  bool contains(Vec2 p) const;

  friend bool operator==(const EnvironmentMap&, const EnvironmentMap&) = default;

 private:
  double width_;
  double height_;
  std::vector<Segment> walls_;
  std::vector<Vec2> candidates_;
  std::optional<GridSpec> grid_;
};

std::vector<Vec2> grid_points(double width, double height, int rows, int cols);

EnvironmentMap load_map(std::istream& source);
EnvironmentMap load_map_string(const std::string& text);
EnvironmentMap load_map_file(const std::string& path);

/// Writes the map file grammar; numbers use round-trip precision.
void write_map(std::ostream& out, const EnvironmentMap& map);
std::string map_to_string(const EnvironmentMap& map);

/// Walls crossing the open line-of-sight segment (p, q); each wall counts
/// at most once. Symmetric in p and q.
int obstruction_count(const EnvironmentMap& map, Vec2 p, Vec2 q);

/// Single-wall predicate behind obstruction_count.
bool blocks_line_of_sight(const Segment& wall, Vec2 p, Vec2 q);

/// n i.i.d. uniform points over the bounding rectangle.
std::vector<Vec2> sample_locations(const EnvironmentMap& map, std::size_t n, Rng& rng);

/// Built-in synthetic floor plans: "open", "tworoom", "corridor".
std::vector<std::string> preset_names();
EnvironmentMap make_preset(const std::string& name, int grid_rows = 10, int grid_cols = 10);

}  // namespace beaconopt
