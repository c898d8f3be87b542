#include "beaconopt/geometry.hpp"

#include "beaconopt/numfmt.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace beaconopt {

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 a) { return std::sqrt(dot(a, a)); }
double distance(Vec2 a, Vec2 b) { return norm(a - b); }

namespace {

double point_segment_distance2(Vec2 p, const Segment& s) {
  const Vec2 d = s.b - s.a;
  const double len2 = dot(d, d);
  if (len2 == 0.0) return dot(p - s.a, p - s.a);
  const double t = std::clamp(dot(p - s.a, d) / len2, 0.0, 1.0);
  const Vec2 e = p - (s.a + t * d);
  return dot(e, e);
}

bool near_segment(Vec2 p, const Segment& s) {
  return point_segment_distance2(p, s) <= kContactTolerance * kContactTolerance;
}

}  // namespace

double point_segment_distance(Vec2 p, const Segment& s) {
  return std::sqrt(point_segment_distance2(p, s));
}

MapParseError::MapParseError(std::size_t line, const std::string& what)
    : MapError(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

namespace {

bool in_rect(Vec2 p, double w, double h) {
  return p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h;
}

std::string fmt_point(Vec2 p) {
  std::ostringstream os;
  os << "(" << p.x << ", " << p.y << ")";
  return os.str();
}

}  // namespace

EnvironmentMap::EnvironmentMap(double width, double height, std::vector<Segment> walls,
                               std::vector<Vec2> candidates)
    : width_(width), height_(height), walls_(std::move(walls)), candidates_(std::move(candidates)) {
  if (!(width_ > 0.0) || !std::isfinite(width_)) throw MapError("nonpositive width");
  if (!(height_ > 0.0) || !std::isfinite(height_)) throw MapError("nonpositive height");
  for (std::size_t i = 0; i < walls_.size(); ++i) {
    const auto& w = walls_[i];
    if (w.a == w.b) throw MapError("wall " + std::to_string(i) + " has coincident endpoints");
    if (!in_rect(w.a, width_, height_) || !in_rect(w.b, width_, height_))
      throw MapError("wall " + std::to_string(i) + " lies outside the bounds");
  }
  if (candidates_.empty()) throw MapError("map has no candidate beacon sites");
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    if (!in_rect(candidates_[i], width_, height_))
      throw MapError("candidate " + std::to_string(i) + " " + fmt_point(candidates_[i]) +
                     " lies outside the bounds");
  }
  std::vector<Vec2> sorted = candidates_;
  std::sort(sorted.begin(), sorted.end(),
            [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  auto dup = std::adjacent_find(sorted.begin(), sorted.end());
  if (dup != sorted.end()) throw MapError("duplicate candidate " + fmt_point(*dup));
}

std::vector<Vec2> grid_points(double width, double height, int rows, int cols) {
  if (rows < 1 || cols < 1) throw MapError("grid dimensions must be positive");
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      pts.push_back({(j + 0.5) * width / cols, (i + 0.5) * height / rows});
    }
  }
  return pts;
}

EnvironmentMap EnvironmentMap::with_grid(double width, double height, std::vector<Segment> walls,
                                         int rows, int cols) {
  if (!(width > 0.0)) throw MapError("nonpositive width");
  if (!(height > 0.0)) throw MapError("nonpositive height");
  EnvironmentMap m(width, height, std::move(walls), grid_points(width, height, rows, cols));
  m.grid_ = GridSpec{rows, cols};
  return m;
}

double EnvironmentMap::half_candidate_spacing() const {
  if (candidates_.size() < 2) return 0.5 * std::min(width_, height_);
  if (grid_) {
    double s = std::numeric_limits<double>::infinity();
    if (grid_->cols > 1) s = std::min(s, width_ / grid_->cols);
    if (grid_->rows > 1) s = std::min(s, height_ / grid_->rows);
    return 0.5 * s;
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates_.size(); ++i)
    for (std::size_t j = i + 1; j < candidates_.size(); ++j)
      best = std::min(best, distance(candidates_[i], candidates_[j]));
  return 0.5 * best;
}

bool EnvironmentMap::contains(Vec2 p) const { return in_rect(p, width_, height_); }

// ---------------------------------------------------------------------------
// Map file grammar

namespace {

double parse_number(const std::string& tok, std::size_t line) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw MapParseError(line, "expected a number, got '" + tok + "'");
  return v;
}

int parse_count(const std::string& tok, std::size_t line) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw MapParseError(line, "expected an integer, got '" + tok + "'");
  return v;
}

}  // namespace

EnvironmentMap load_map(std::istream& source) {
  std::optional<std::pair<double, double>> bounds;
  std::optional<EnvironmentMap::GridSpec> grid;
  std::vector<Vec2> candidates;
  std::vector<Segment> walls;

  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(source, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    const std::string& key = tok[0];
    auto expect_args = [&](std::size_t n) {
      if (tok.size() != n + 1)
        throw MapParseError(lineno, "'" + key + "' takes " + std::to_string(n) + " values, got " +
                                        std::to_string(tok.size() - 1));
    };
    if (key == "bounds") {
      expect_args(2);
      if (bounds) throw MapParseError(lineno, "duplicate 'bounds' directive");
      bounds = {parse_number(tok[1], lineno), parse_number(tok[2], lineno)};
      if (!(bounds->first > 0.0)) throw MapParseError(lineno, "nonpositive width");
      if (!(bounds->second > 0.0)) throw MapParseError(lineno, "nonpositive height");
    } else if (key == "grid") {
      expect_args(2);
      if (grid) throw MapParseError(lineno, "duplicate 'grid' directive");
      grid = EnvironmentMap::GridSpec{parse_count(tok[1], lineno), parse_count(tok[2], lineno)};
      if (grid->rows < 1 || grid->cols < 1)
        throw MapParseError(lineno, "grid dimensions must be positive");
    } else if (key == "candidate") {
      expect_args(2);
      candidates.push_back({parse_number(tok[1], lineno), parse_number(tok[2], lineno)});
    } else if (key == "wall") {
      expect_args(4);
      walls.push_back({{parse_number(tok[1], lineno), parse_number(tok[2], lineno)},
                       {parse_number(tok[3], lineno), parse_number(tok[4], lineno)}});
    } else {
      throw MapParseError(lineno, "unknown directive '" + key + "'");
    }
  }
  if (source.bad()) throw MapParseError(0, "read error");
  if (!bounds) throw MapParseError(0, "missing 'bounds' directive");
  if (grid && !candidates.empty())
    throw MapParseError(0, "'grid' and 'candidate' directives are mutually exclusive");
  if (grid) return EnvironmentMap::with_grid(bounds->first, bounds->second, std::move(walls),
                                             grid->rows, grid->cols);
  return EnvironmentMap(bounds->first, bounds->second, std::move(walls), std::move(candidates));
}

EnvironmentMap load_map_string(const std::string& text) {
  std::istringstream is(text);
  return load_map(is);
}

EnvironmentMap load_map_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MapError("cannot open map file '" + path + "'");
  try {
    return load_map(in);
  } catch (const MapParseError& e) {
    throw MapParseError(e.line(), path + ": " + e.what());
  }
}

void write_map(std::ostream& out, const EnvironmentMap& map) {
  out << "bounds " << fmt_num(map.width()) << ' ' << fmt_num(map.height()) << '\n';
  if (map.grid()) {
    out << "grid " << map.grid()->rows << ' ' << map.grid()->cols << '\n';
  } else {
    for (const auto& c : map.candidates())
      out << "candidate " << fmt_num(c.x) << ' ' << fmt_num(c.y) << '\n';
  }
  for (const auto& w : map.walls())
    out << "wall " << fmt_num(w.a.x) << ' ' << fmt_num(w.a.y) << ' ' << fmt_num(w.b.x) << ' '
        << fmt_num(w.b.y) << '\n';
}

std::string map_to_string(const EnvironmentMap& map) {
  std::ostringstream os;
  write_map(os, map);
  return os.str();
}

// ---------------------------------------------------------------------------
// Line of sight

namespace {

bool lex_less(Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); }

int sign(double v) { return (v > 0.0) - (v < 0.0); }

// Collinear wall along the line through p, q: does it cover a positive-length
// part of the open segment?
bool collinear_overlap(const Segment& wall, Vec2 p, Vec2 q) {
  const Vec2 d = q - p;
  const double len = norm(d);
  const double ta = dot(wall.a - p, d) / (len * len);
  const double tb = dot(wall.b - p, d) / (len * len);
  const double lo = std::max(std::min(ta, tb), 0.0);
  const double hi = std::min(std::max(ta, tb), 1.0);
  return (hi - lo) * len > kContactTolerance;
}

}  // namespace

bool blocks_line_of_sight(const Segment& wall, Vec2 p, Vec2 q) {
  if (lex_less(q, p)) std::swap(p, q);
  if (dot(q - p, q - p) <= kContactTolerance * kContactTolerance) return false;
  // Every blocking case needs the two boxes to overlap within the tolerance.
  if (std::max(wall.a.x, wall.b.x) < p.x - kContactTolerance ||
      std::min(wall.a.x, wall.b.x) > q.x + kContactTolerance ||
      std::max(wall.a.y, wall.b.y) < std::min(p.y, q.y) - kContactTolerance ||
      std::min(wall.a.y, wall.b.y) > std::max(p.y, q.y) + kContactTolerance)
    return false;

  const Vec2 wd = wall.b - wall.a;
  const Vec2 ld = q - p;
  const double c1 = cross(wd, p - wall.a);
  const double c2 = cross(wd, q - wall.a);
  const double c3 = cross(ld, wall.a - p);
  const double c4 = cross(ld, wall.b - p);
  // Each endpoint clear of the other segment's supporting line rules out
  // every contact case below, leaving the strict crossing test.
  const double tw = kContactTolerance * kContactTolerance * dot(wd, wd);
  const double tl = kContactTolerance * kContactTolerance * dot(ld, ld);
  if (c1 * c1 > tw && c2 * c2 > tw && c3 * c3 > tl && c4 * c4 > tl)
    return (c1 < 0.0) != (c2 < 0.0) && (c3 < 0.0) != (c4 < 0.0);

  const Segment los{p, q};
  const bool near_p = near_segment(p, wall);
  const bool near_q = near_segment(q, wall);
  if (near_p && near_q) return true;  // wall runs along the whole sight line
  if (near_p || near_q) {
    // Touching at an endpoint of the sight line only counts if the wall also
    // runs along the line into its interior.
    const double da = std::abs(cross(q - p, wall.a - p)) / norm(q - p);
    const double db = std::abs(cross(q - p, wall.b - p)) / norm(q - p);
    if (da <= kContactTolerance && db <= kContactTolerance) return collinear_overlap(wall, p, q);
    return false;
  }
  if (near_segment(wall.a, los) || near_segment(wall.b, los))
    return true;
  const int o1 = sign(cross(wall.b - wall.a, p - wall.a));
  const int o2 = sign(cross(wall.b - wall.a, q - wall.a));
  const int o3 = sign(cross(q - p, wall.a - p));
  const int o4 = sign(cross(q - p, wall.b - p));
  return o1 * o2 < 0 && o3 * o4 < 0;
}

int obstruction_count(const EnvironmentMap& map, Vec2 p, Vec2 q) {
  int n = 0;
  for (const auto& w : map.walls()) n += blocks_line_of_sight(w, p, q) ? 1 : 0;
  return n;
}

std::vector<Vec2> sample_locations(const EnvironmentMap& map, std::size_t n, Rng& rng) {
  std::vector<Vec2> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform() * map.width();
    const double y = rng.uniform() * map.height();
    pts.push_back({x, y});
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Presets

std::vector<std::string> preset_names() { return {"open", "tworoom", "corridor"}; }

EnvironmentMap make_preset(const std::string& name, int grid_rows, int grid_cols) {
  constexpr double w = 1.0;
  constexpr double h = 0.7;
  std::vector<Segment> walls;
  if (name == "open") {
  } else if (name == "tworoom") {
    // Partition at x = 0.5 with a door between y = 0.30 and y = 0.40.
    walls = {{{0.5, 0.0}, {0.5, 0.3}}, {{0.5, 0.4}, {0.5, 0.7}}};
  } else if (name == "corridor") {
    // Horizontal corridor between y = 0.25 and y = 0.45, one door on each side,
    // and a cross wall splitting the lower rooms.
    walls = {{{0.0, 0.25}, {0.4, 0.25}}, {{0.5, 0.25}, {1.0, 0.25}},
             {{0.0, 0.45}, {0.6, 0.45}}, {{0.7, 0.45}, {1.0, 0.45}},
             {{0.7, 0.0}, {0.7, 0.25}}};
  } else {
    std::string names;
    for (const auto& p : preset_names()) names += (names.empty() ? "" : ", ") + p;
    throw MapError("unknown preset '" + name + "' (available: " + names + ")");
  }
  return EnvironmentMap::with_grid(w, h, std::move(walls), grid_rows, grid_cols);
}

}  // namespace beaconopt
