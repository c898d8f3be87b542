#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "beaconopt/allocation.hpp"
#include "beaconopt/geometry.hpp"
#include "beaconopt/rng.hpp"
#include "beaconopt/tape.hpp"

namespace beaconopt {

/// RF channel model parameters. Defaults are the published experiment values;
/// r_min must be set per map (see for_map).
struct PropagationParams {
  double p0 = 6.25e-4;
  double zeta = 2.0;
  double beta = std::exp(-1.0);
  double noise_var = 1e-4;
  double tau = 1.0;
  int channels = 4;
  double r_min = 0.0;

  /// Defaults with r_min = half the candidate spacing of `map`.
  static PropagationParams for_map(const EnvironmentMap& map, int channels = 4);

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;

  friend bool operator==(const PropagationParams&, const PropagationParams&) = default;
};

/// Per-channel received power, 0 <= s[c] <= tau.
struct Measurement {
  std::vector<double> s;
};

/// Random phases (one per candidate) and receiver noise (one pair per channel)
/// for a single environment invocation.
struct NoiseDraw {
  std::vector<double> phases;
  std::vector<double> eps1;
  std::vector<double> eps2;
};

NoiseDraw sample_noise(const PropagationParams& params, std::size_t num_candidates, Rng& rng);
/// Given phases, zero receiver noise.
NoiseDraw noiseless(std::vector<double> phases, int channels);

/// P0 * max(r, r_min)^-zeta * beta^obstructions.
double received_power(const PropagationParams& params, const EnvironmentMap& map, Vec2 beacon,
                      Vec2 v);

/// Noise-free constants of the measurement model for a batch of locations:
/// sqrt(P_l(v)) cos(phi_l) and sin(phi_l) per (location, candidate), plus
/// the per-channel noise terms.
struct MeasurementInputs {
  Matrix amp_cos;  // B x L
  Matrix amp_sin;  // B x L
  Matrix eps1;     // B x C
  Matrix eps2;     // B x C
};

MeasurementInputs measurement_inputs(const PropagationParams& params, const EnvironmentMap& map,
                                     std::span<const Vec2> locations,
                                     std::span<const NoiseDraw> noise);

/// Channel powers s (B x C) from assignment rows (L x (C+1), column 0 = no
/// beacon). Every step is recorded on the tape of `rows`.
Var measure_rows(const PropagationParams& params, const MeasurementInputs& inputs,
                 const Var& rows);

Measurement measure(const PropagationParams& params, const EnvironmentMap& map,
                    const HardAllocation& alloc, Vec2 v, const NoiseDraw& noise);

/// Relaxed form: rows are probability vectors (possibly taped).
Var measure_relaxed(const PropagationParams& params, const EnvironmentMap& map, const Var& rows,
                    Vec2 v, const NoiseDraw& noise);

/// Batch of hard measurements, B x C.
Matrix measure_batch(const PropagationParams& params, const EnvironmentMap& map,
                     const HardAllocation& alloc, std::span<const Vec2> locations,
                     std::span<const NoiseDraw> noise);

}  // namespace beaconopt
