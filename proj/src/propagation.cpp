#include "beaconopt/propagation.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>
#include <string>

namespace beaconopt {

PropagationParams PropagationParams::for_map(const EnvironmentMap& map, int channels) {
  PropagationParams p;
  p.channels = channels;
  p.r_min = map.half_candidate_spacing();
  return p;
}

void PropagationParams::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (!(p0 > 0.0)) fail("p0 must be positive");
  if (!(zeta >= 0.0)) fail("zeta must be nonnegative");
  if (!(beta > 0.0 && beta <= 1.0)) fail("beta must lie in (0, 1]");
  if (!(noise_var >= 0.0)) fail("noise_var must be nonnegative");
  if (!(tau > 0.0)) fail("tau must be positive");
  if (channels < 1) fail("channels must be at least 1");
  if (!(r_min > 0.0)) fail("r_min must be positive");
}

NoiseDraw sample_noise(const PropagationParams& params, std::size_t num_candidates, Rng& rng) {
  NoiseDraw n;
  n.phases.resize(num_candidates);
  for (auto& phi : n.phases) phi = 2.0 * std::numbers::pi * rng.uniform();
  const double sd = std::sqrt(params.noise_var);
  const auto c = static_cast<std::size_t>(params.channels);
  n.eps1.resize(c);
  n.eps2.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    n.eps1[i] = rng.normal(0.0, sd);
    n.eps2[i] = rng.normal(0.0, sd);
  }
  return n;
}

NoiseDraw noiseless(std::vector<double> phases, int channels) {
  NoiseDraw n;
  n.phases = std::move(phases);
  n.eps1.assign(static_cast<std::size_t>(channels), 0.0);
  n.eps2.assign(static_cast<std::size_t>(channels), 0.0);
  return n;
}

double received_power(const PropagationParams& params, const EnvironmentMap& map, Vec2 beacon,
                      Vec2 v) {
  const double r = std::max(distance(beacon, v), params.r_min);
  const int o = obstruction_count(map, beacon, v);
  return params.p0 * std::pow(r, -params.zeta) * std::pow(params.beta, o);
}

MeasurementInputs measurement_inputs(const PropagationParams& params, const EnvironmentMap& map,
                                     std::span<const Vec2> locations,
                                     std::span<const NoiseDraw> noise) {
  if (locations.size() != noise.size())
    throw std::invalid_argument("measurement_inputs: one noise draw per location required");
  const auto B = static_cast<Eigen::Index>(locations.size());
  const auto L = static_cast<Eigen::Index>(map.num_candidates());
  const Eigen::Index C = params.channels;
  MeasurementInputs in{Matrix(B, L), Matrix(B, L), Matrix(B, C), Matrix(B, C)};
  for (Eigen::Index b = 0; b < B; ++b) {
    const NoiseDraw& nd = noise[static_cast<std::size_t>(b)];
    if (static_cast<Eigen::Index>(nd.phases.size()) != L ||
        static_cast<Eigen::Index>(nd.eps1.size()) != C ||
        static_cast<Eigen::Index>(nd.eps2.size()) != C)
      throw std::invalid_argument("noise draw does not match candidate/channel counts");
    const Vec2 v = locations[static_cast<std::size_t>(b)];
    for (Eigen::Index l = 0; l < L; ++l) {
      const double amp =
          std::sqrt(received_power(params, map, map.candidates()[static_cast<std::size_t>(l)], v));
      const double phi = nd.phases[static_cast<std::size_t>(l)];
      in.amp_cos(b, l) = amp * std::cos(phi);
      in.amp_sin(b, l) = amp * std::sin(phi);
    }
    for (Eigen::Index c = 0; c < C; ++c) {
      in.eps1(b, c) = nd.eps1[static_cast<std::size_t>(c)];
      in.eps2(b, c) = nd.eps2[static_cast<std::size_t>(c)];
    }
  }
  return in;
}

Var measure_rows(const PropagationParams& params, const MeasurementInputs& inputs,
                 const Var& rows) {
  Tape& t = *rows.tape();
  const Eigen::Index C = params.channels;
  if (rows.cols() != C + 1 || rows.rows() != inputs.amp_cos.cols())
    throw ShapeError("measure: assignment rows are " + shape_str(rows.value()) + ", expected " +
                     std::to_string(inputs.amp_cos.cols()) + "x" + std::to_string(C + 1));
  Var on_channel = slice_cols(rows, 1, C);
  Var in_phase = add(t.constant(inputs.eps1), matmul(t.constant(inputs.amp_cos), on_channel));
  Var quadrature = add(t.constant(inputs.eps2), matmul(t.constant(inputs.amp_sin), on_channel));
  return clip_max(add(square(in_phase), square(quadrature)), params.tau);
}

Var measure_relaxed(const PropagationParams& params, const EnvironmentMap& map, const Var& rows,
                    Vec2 v, const NoiseDraw& noise) {
  const auto inputs = measurement_inputs(params, map, std::span(&v, 1), std::span(&noise, 1));
  return measure_rows(params, inputs, rows);
}

Matrix measure_batch(const PropagationParams& params, const EnvironmentMap& map,
                     const HardAllocation& alloc, std::span<const Vec2> locations,
                     std::span<const NoiseDraw> noise) {
  if (alloc.size() != map.num_candidates())
    throw std::invalid_argument("allocation size does not match the map's candidate count");
  if (alloc.channels != params.channels)
    throw std::invalid_argument("allocation channel count does not match the model");
  const auto inputs = measurement_inputs(params, map, locations, noise);
  Tape tape;
  return measure_rows(params, inputs, tape.constant(one_hot(alloc))).value();
}

Measurement measure(const PropagationParams& params, const EnvironmentMap& map,
                    const HardAllocation& alloc, Vec2 v, const NoiseDraw& noise) {
  const Matrix s = measure_batch(params, map, alloc, std::span(&v, 1), std::span(&noise, 1));
  return Measurement{std::vector<double>(s.data(), s.data() + s.size())};
}

}  // namespace beaconopt
