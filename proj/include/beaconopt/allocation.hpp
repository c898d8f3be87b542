#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "beaconopt/geometry.hpp"
#include "beaconopt/rng.hpp"
#include "beaconopt/tape.hpp"

namespace beaconopt {

/// Assignment index convention: 0 = no beacon, c + 1 = beacon on channel c.
struct HardAllocation {
  std::vector<int> assignment;
  int channels = 0;

  std::size_t size() const { return assignment.size(); }
  void validate() const;
  friend bool operator==(const HardAllocation&, const HardAllocation&) = default;
};

/// Trainable weights w (L x (C+1)) and the sharpness alpha; rows are
/// softmax(alpha * w) per candidate.
struct RelaxedAllocation {
  Matrix weights;
  double alpha = 1.0;
  Matrix rows;
};

RelaxedAllocation relax(const Matrix& weights, double alpha);
/// Taped form of relax.
Var relax(const Var& weights, double alpha);

/// Gaussian(0, std) weights, near-uniform rows at small alpha.
Matrix init_allocation_weights(std::size_t candidates, int channels, Rng& rng,
                               double stddev = 0.01);

/// Per-row arg-max, ties toward the lowest index.
HardAllocation harden(const Matrix& weights_or_rows);
inline HardAllocation harden(const RelaxedAllocation& r) { return harden(r.weights); }

/// L x (C+1) one-hot rows.
Matrix one_hot(const HardAllocation& alloc);

struct AlphaSchedule {
  double alpha0 = 1.0;
  double gamma = 1.25e-9;
  std::int64_t switch_iter = 900000;
  friend bool operator==(const AlphaSchedule&, const AlphaSchedule&) = default;
};

/// alpha0 * (1 + gamma * t^2).
double alpha_at(const AlphaSchedule& s, std::int64_t t);

enum class LambdaMode { kFixed, kAnnealed };

struct LambdaSchedule {
  double lambda0 = 0.2;
  double eta = 0.25;
  std::int64_t period = 100000;
  LambdaMode mode = LambdaMode::kAnnealed;
  friend bool operator==(const LambdaSchedule&, const LambdaSchedule&) = default;
};

/// Fixed: lambda0. Annealed: lambda0 * eta^floor(t / period).
double lambda_at(const LambdaSchedule& s, std::int64_t t);

/// kPaperVerbatim: lambda * sum_l rows(l, 0) (mass on "no beacon").
/// kBeaconPenalty: lambda * sum_l (1 - rows(l, 0)) (expected beacon count).
enum class RegSign { kPaperVerbatim, kBeaconPenalty };

Var regularizer(const Var& rows, double lambda, RegSign sign = RegSign::kBeaconPenalty);

std::size_t beacon_count(const HardAllocation& alloc);
/// sum_l (1 - rows(l, 0)).
double expected_beacon_count(const Matrix& rows);

/// One line per candidate: `l x y assignment`.
void write_allocation(std::ostream& out, const EnvironmentMap& map, const HardAllocation& alloc);
HardAllocation read_allocation(std::istream& in, int channels);

std::string to_string(LambdaMode m);
std::string to_string(RegSign s);

}  // namespace beaconopt
