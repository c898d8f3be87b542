#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace beaconopt {

/// Dense row-major double matrix; scalars are 1x1, row vectors 1xn.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_str(const Matrix& m);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode recorder. Nodes are appended in evaluation
/// order, so the node list is always topologically sorted.
class Tape {
 public:
  /// Receives the node's output gradient and adds into input gradients via
  /// Tape::accumulate.
  using BackwardFn = std::function<void(Tape& tape, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable input; receives a gradient on backward().
  Var leaf(Matrix value);
  /// Input that never needs a gradient.
  Var constant(Matrix value);

  /// Records an operation. `backward` may be empty when no input needs a gradient.
  Var record(Matrix value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a 1x1 loss. Resets every gradient slot first, so
  /// repeated sweeps give identical results.
  void backward(const Var& loss);

  void accumulate(const Var& target, const Matrix& g);
  bool needs_grad(const Var& v) const { return nodes_[v.id_].needs_grad; }

  const Matrix& value(const Var& v) const { return nodes_[v.id_].value; }
  const Matrix& grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    bool needs_grad = false;
    bool is_leaf = false;
  };

  void check_owner(const Var& v) const;

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitives. Binary elementwise ops broadcast a 1x1, 1xn or mx1 operand
// against an mxn one.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
/// Sum of all entries, 1x1.
Var sum(const Var& a);
/// Mean of all entries, 1x1.
Var mean(const Var& a);
/// Column sums, 1 x cols.
Var sum_rows(const Var& a);
Var relu(const Var& a);
Var sqrt(const Var& a);
Var cos(const Var& a);
Var sin(const Var& a);
Var square(const Var& a);
/// min(tau, a); gradient 1 where a <= tau, 0 where saturated.
Var clip_max(const Var& a, double tau);
/// Rowwise softmax(alpha * a).
Var softmax_scaled(const Var& a, double alpha);
/// Max over disjoint groups of k consecutive columns; ties go to the first.
Var max_pool_groups(const Var& a, Eigen::Index k);
/// Columns [start, start + count).
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);

struct BatchNormStats {
  Matrix running_mean;  // 1 x n
  Matrix running_var;   // 1 x n
  explicit BatchNormStats(Eigen::Index n = 0)
      : running_mean(Matrix::Zero(1, n)), running_var(Matrix::Ones(1, n)) {}
};

inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEps = 1e-5;

/// Per-column normalization followed by gamma * xhat + beta. Training mode
/// uses batch statistics (biased variance) and folds them into `stats`
/// with momentum 0.9; eval mode reads `stats` and leaves it untouched.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats,
               bool training);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }

// ---------------------------------------------------------------------------
// Finite-difference oracle

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Builds a scalar loss from a leaf input on the given tape.
using TapedFunction = std::function<Var(Tape& tape, const Var& input)>;

/// Relative error between a and b with denominator max(|a|, |b|, 1e-8).
double relative_error(double a, double b);

/// Compares the tape gradient of f at x0 with central differences. Only the
/// entries listed in `indices` are probed (all entries when empty).
GradCheckResult finite_diff_check(const TapedFunction& f, const Matrix& x0, double step = 1e-5,
                                  const std::vector<std::size_t>& indices = {});

}  // namespace beaconopt
