#include "beaconopt/allocation.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "beaconopt/numfmt.hpp"

namespace beaconopt {

void HardAllocation::validate() const {
  if (channels < 1) throw std::invalid_argument("allocation needs at least one channel");
  for (std::size_t l = 0; l < assignment.size(); ++l) {
    if (assignment[l] < 0 || assignment[l] > channels)
      throw std::invalid_argument("assignment " + std::to_string(l) + " = " +
                                  std::to_string(assignment[l]) + " outside [0, " +
                                  std::to_string(channels) + "]");
  }
}

RelaxedAllocation relax(const Matrix& weights, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("relax: alpha must be positive");
  Tape tape;
  Var rows = softmax_scaled(tape.constant(weights), alpha);
  return RelaxedAllocation{weights, alpha, rows.value()};
}

Var relax(const Var& weights, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("relax: alpha must be positive");
  return softmax_scaled(weights, alpha);
}

Matrix init_allocation_weights(std::size_t candidates, int channels, Rng& rng, double stddev) {
  Matrix w(static_cast<Eigen::Index>(candidates), channels + 1);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, stddev);
  return w;
}

HardAllocation harden(const Matrix& weights_or_rows) {
  HardAllocation h;
  h.channels = static_cast<int>(weights_or_rows.cols()) - 1;
  h.assignment.resize(static_cast<std::size_t>(weights_or_rows.rows()));
  for (Eigen::Index r = 0; r < weights_or_rows.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < weights_or_rows.cols(); ++c)
      if (weights_or_rows(r, c) > weights_or_rows(r, best)) best = c;
    h.assignment[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return h;
}

Matrix one_hot(const HardAllocation& alloc) {
  alloc.validate();
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(alloc.size()), alloc.channels + 1);
  for (std::size_t l = 0; l < alloc.size(); ++l)
    m(static_cast<Eigen::Index>(l), alloc.assignment[l]) = 1.0;
  return m;
}

double alpha_at(const AlphaSchedule& s, std::int64_t t) {
  const double td = static_cast<double>(t);
  return s.alpha0 * (1.0 + s.gamma * (td * td));
}

double lambda_at(const LambdaSchedule& s, std::int64_t t) {
  if (s.mode == LambdaMode::kFixed) return s.lambda0;
  if (s.period <= 0) throw std::invalid_argument("lambda schedule period must be positive");
  return s.lambda0 * std::pow(s.eta, static_cast<double>(t / s.period));
}

Var regularizer(const Var& rows, double lambda, RegSign sign) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("regularizer: lambda must be nonnegative");
  Var none = sum(slice_cols(rows, 0, 1));
  if (sign == RegSign::kPaperVerbatim) return scale(none, lambda);
  // sum_l (1 - rows(l,0)) = L - sum_l rows(l,0)
  Tape& t = *rows.tape();
  Var count = t.constant(Matrix::Constant(1, 1, static_cast<double>(rows.rows())));
  return scale(sub(count, none), lambda);
}

std::size_t beacon_count(const HardAllocation& alloc) {
  std::size_t n = 0;
  for (int a : alloc.assignment) n += a != 0 ? 1 : 0;
  return n;
}

double expected_beacon_count(const Matrix& rows) {
  return static_cast<double>(rows.rows()) - rows.col(0).sum();
}

void write_allocation(std::ostream& out, const EnvironmentMap& map, const HardAllocation& alloc) {
  if (alloc.size() != map.num_candidates())
    throw std::invalid_argument("allocation size does not match the map's candidate count");
  for (std::size_t l = 0; l < alloc.size(); ++l) {
    const Vec2 c = map.candidates()[l];
    out << l << ' ' << fmt_num(c.x) << ' ' << fmt_num(c.y) << ' ' << alloc.assignment[l] << '\n';
  }
}

HardAllocation read_allocation(std::istream& in, int channels) {
  HardAllocation h;
  h.channels = channels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::size_t l = 0;
    double x = 0, y = 0;
    int a = 0;
    if (!(ls >> l >> x >> y >> a) || l != h.assignment.size())
      throw std::runtime_error("allocation line " + std::to_string(lineno) + " is malformed");
    h.assignment.push_back(a);
  }
  h.validate();
  return h;
}

std::string to_string(LambdaMode m) { return m == LambdaMode::kFixed ? "fixed" : "annealed"; }
std::string to_string(RegSign s) {
  return s == RegSign::kPaperVerbatim ? "paper_verbatim" : "beacon_penalty";
}

}  // namespace beaconopt
