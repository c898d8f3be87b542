#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace beaconopt {

/// Seeded random stream. Wraps std::mt19937_64 and draws uniforms/normals
/// with fixed formulas so values do not depend on the standard library's
/// distribution implementations, and so the full state round-trips through
/// a checkpoint.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream for (seed, stream) pairs, e.g. one per evaluation location.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes two draws, caches nothing.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::string state() const;
  void set_state(const std::string& s);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace beaconopt
