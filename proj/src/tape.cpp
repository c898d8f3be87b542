#include "beaconopt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace beaconopt {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

const Matrix& Var::value() const { return tape_->value(*this); }
const Matrix& Var::grad() const { return tape_->grad(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("expected 1x1, got " + shape_str(v));
  return v(0, 0);
}

// ---------------------------------------------------------------------------

void Tape::check_owner(const Var& v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size())
    throw std::logic_error("variable does not belong to this tape");
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), {}, true, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), {}, false, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const auto& in : inputs) {
    check_owner(in);
    needs = needs || nodes_[in.id_].needs_grad;
  }
  if (!backward) needs = false;
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : BackwardFn{},
                        needs, false});
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::grad(const Var& v) const {
  check_owner(v);
  return nodes_[v.id_].grad;
}

void Tape::accumulate(const Var& target, const Matrix& g) {
  Node& n = nodes_[target.id_];
  if (!n.needs_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols())
    throw ShapeError("gradient shape " + shape_str(g) + " does not match value shape " +
                     shape_str(n.value));
  n.grad += g;
}

void Tape::backward(const Var& loss) {
  check_owner(loss);
  const Matrix& lv = nodes_[loss.id_].value;
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ShapeError("backward needs a 1x1 loss, got " + shape_str(lv));
  for (auto& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_[loss.id_].grad(0, 0) = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backward) continue;
    // Copy: the callback may touch other nodes but never reallocates.
    const Matrix g = n.grad;
    n.backward(*this, g);
  }
}

// ---------------------------------------------------------------------------
// Broadcasting helpers

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::logic_error("uninitialized variable");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw std::logic_error("operands live on different tapes");
  return t;
}

bool broadcastable(Eigen::Index r, Eigen::Index c, Eigen::Index R, Eigen::Index C) {
  return (r == R || r == 1) && (c == C || c == 1);
}

Matrix expand(const Matrix& m, Eigen::Index R, Eigen::Index C) {
  if (m.rows() == R && m.cols() == C) return m;
  if (m.rows() == 1 && m.cols() == 1) return Matrix::Constant(R, C, m(0, 0));
  if (m.rows() == 1) return m.replicate(R, 1);
  return m.replicate(1, C);
}

Matrix reduce_to(const Matrix& g, Eigen::Index r, Eigen::Index c) {
  if (g.rows() == r && g.cols() == c) return g;
  if (r == 1 && c == 1) return Matrix::Constant(1, 1, g.sum());
  if (r == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

struct Broadcast {
  Eigen::Index rows;
  Eigen::Index cols;
};

Broadcast broadcast_shape(const Matrix& a, const Matrix& b, const char* op) {
  const Eigen::Index R = std::max(a.rows(), b.rows());
  const Eigen::Index C = std::max(a.cols(), b.cols());
  if (!broadcastable(a.rows(), a.cols(), R, C) || !broadcastable(b.rows(), b.cols(), R, C))
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                     shape_str(b));
  return {R, C};
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise binary ops

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const auto s = broadcast_shape(a.value(), b.value(), "add");
  Matrix out = expand(a.value(), s.rows, s.cols) + expand(b.value(), s.rows, s.cols);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, reduce_to(g, a.rows(), a.cols()));
    tp.accumulate(b, reduce_to(g, b.rows(), b.cols()));
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const auto s = broadcast_shape(a.value(), b.value(), "sub");
  Matrix out = expand(a.value(), s.rows, s.cols) - expand(b.value(), s.rows, s.cols);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, reduce_to(g, a.rows(), a.cols()));
    tp.accumulate(b, reduce_to(-g, b.rows(), b.cols()));
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const auto s = broadcast_shape(a.value(), b.value(), "mul");
  Matrix out = expand(a.value(), s.rows, s.cols).cwiseProduct(expand(b.value(), s.rows, s.cols));
  return t.record(std::move(out), {a, b}, [a, b, s](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a))
      tp.accumulate(a, reduce_to(g.cwiseProduct(expand(b.value(), s.rows, s.cols)), a.rows(),
                                 a.cols()));
    if (tp.needs_grad(b))
      tp.accumulate(b, reduce_to(g.cwiseProduct(expand(a.value(), s.rows, s.cols)), b.rows(),
                                 b.cols()));
  });
}

Var div(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const auto s = broadcast_shape(a.value(), b.value(), "div");
  Matrix out = expand(a.value(), s.rows, s.cols).cwiseQuotient(expand(b.value(), s.rows, s.cols));
  return t.record(std::move(out), {a, b}, [a, b, s](Tape& tp, const Matrix& g) {
    const Matrix bb = expand(b.value(), s.rows, s.cols);
    if (tp.needs_grad(a)) tp.accumulate(a, reduce_to(g.cwiseQuotient(bb), a.rows(), a.cols()));
    if (tp.needs_grad(b)) {
      const Matrix aa = expand(a.value(), s.rows, s.cols);
      Matrix gb = -g.cwiseProduct(aa).cwiseQuotient(bb.cwiseProduct(bb));
      tp.accumulate(b, reduce_to(gb, b.rows(), b.cols()));
    }
  });
}

Var scale(const Var& a, double s) {
  Tape& t = tape_of(a);
  return t.record(a.value() * s, {a},
                  [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, g * s); });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows())
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.value()) + " and " +
                     shape_str(b.value()));
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a)) tp.accumulate(a, g * b.value().transpose());
    if (tp.needs_grad(b)) tp.accumulate(b, a.value().transpose() * g);
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  return t.record(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  Tape& t = tape_of(a);
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of empty matrix");
  return t.record(Matrix::Constant(1, 1, a.value().sum() / n), {a},
                  [a, n](Tape& tp, const Matrix& g) {
                    tp.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
                  });
}

Var sum_rows(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().colwise().sum();
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.replicate(a.rows(), 1));
  });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops

Var relu(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().cwiseMax(0.0);
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var sqrt(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().cwiseSqrt();
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (0.5 * g.array() / a.value().array().sqrt()).matrix());
  });
}

Var cos(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().cos().matrix();
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (-g.array() * a.value().array().sin()).matrix());
  });
}

Var sin(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().sin().matrix();
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (g.array() * a.value().array().cos()).matrix());
  });
}

Var square(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().square().matrix();
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (2.0 * g.array() * a.value().array()).matrix());
  });
}

Var clip_max(const Var& a, double tau) {
  Tape& t = tape_of(a);
  Matrix out = a.value().cwiseMin(tau);
  return t.record(std::move(out), {a}, [a, tau](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (a.value().array() <= tau).select(g, 0.0));
  });
}

// ---------------------------------------------------------------------------
// Structured ops

namespace {

Matrix rowwise_softmax(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      out(r, c) = std::exp(z(r, c) - m);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return out;
}

}  // namespace

Var softmax_scaled(const Var& a, double alpha) {
  Tape& t = tape_of(a);
  Matrix y = rowwise_softmax(alpha * a.value());
  Matrix y_saved = y;
  return t.record(std::move(y), {a},
                  [a, alpha, y = std::move(y_saved)](Tape& tp, const Matrix& g) {
                    const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
                    Matrix ga = g;
                    ga.colwise() -= dots;
                    tp.accumulate(a, alpha * ga.cwiseProduct(y));
                  });
}

Var max_pool_groups(const Var& a, Eigen::Index k) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (k < 1 || x.cols() % k != 0)
    throw ShapeError("max_pool_groups: group size " + std::to_string(k) +
                     " does not divide width of " + shape_str(x));
  const Eigen::Index groups = x.cols() / k;
  Matrix out(x.rows(), groups);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(x.rows() * groups));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index gi = 0; gi < groups; ++gi) {
      Eigen::Index best = gi * k;
      for (Eigen::Index j = gi * k + 1; j < (gi + 1) * k; ++j)
        if (x(r, j) > x(r, best)) best = j;
      out(r, gi) = x(r, best);
      arg[static_cast<std::size_t>(r * groups + gi)] = best;
    }
  }
  return t.record(std::move(out), {a},
                  [a, groups, arg = std::move(arg)](Tape& tp, const Matrix& g) {
                    Matrix ga = Matrix::Zero(a.rows(), a.cols());
                    for (Eigen::Index r = 0; r < ga.rows(); ++r)
                      for (Eigen::Index gi = 0; gi < groups; ++gi)
                        ga(r, arg[static_cast<std::size_t>(r * groups + gi)]) += g(r, gi);
                    tp.accumulate(a, ga);
                  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " +
                     shape_str(a.value()));
  Matrix out = a.value().middleCols(start, count);
  return t.record(std::move(out), {a}, [a, start, count](Tape& tp, const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    ga.middleCols(start, count) = g;
    tp.accumulate(a, ga);
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats,
               bool training) {
  Tape& t = tape_of(x, gamma);
  tape_of(x, beta);
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n)
    throw ShapeError("batch_norm: scale/shift must be 1x" + std::to_string(n) + ", got " +
                     shape_str(gamma.value()) + " and " + shape_str(beta.value()));
  if (stats.running_mean.cols() != n || stats.running_var.cols() != n)
    throw ShapeError("batch_norm: running statistics have the wrong width");

  if (!training) {
    const Eigen::RowVectorXd inv_std =
        (stats.running_var.array() + kBatchNormEps).rsqrt().matrix();
    Matrix xhat = (xv.rowwise() - stats.running_mean.row(0)).array().rowwise() *
                  inv_std.array();
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
                 beta.value().row(0).array();
    return t.record(std::move(out), {x, gamma, beta},
                    [x, gamma, beta, inv_std, xhat = std::move(xhat)](Tape& tp,
                                                                       const Matrix& g) {
                      if (tp.needs_grad(x))
                        tp.accumulate(x, (g.array().rowwise() *
                                          (gamma.value().row(0).array() * inv_std.array()))
                                             .matrix());
                      tp.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                      tp.accumulate(beta, g.colwise().sum());
                    });
  }

  const Eigen::Index batch = xv.rows();
  if (batch < 2) throw ShapeError("batch_norm: training mode needs at least 2 rows");
  const Eigen::RowVectorXd mu = xv.colwise().mean();
  const Matrix centered = xv.rowwise() - mu;
  const Eigen::RowVectorXd var = centered.array().square().colwise().mean().matrix();
  const Eigen::RowVectorXd inv_std = (var.array() + kBatchNormEps).rsqrt().matrix();
  Matrix xhat = (centered.array().rowwise() * inv_std.array()).matrix();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();

  const double unbiased = static_cast<double>(batch) / static_cast<double>(batch - 1);
  stats.running_mean = kBatchNormMomentum * stats.running_mean + (1.0 - kBatchNormMomentum) * mu;
  stats.running_var =
      kBatchNormMomentum * stats.running_var + (1.0 - kBatchNormMomentum) * unbiased * var;

  return t.record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, inv_std, xhat = std::move(xhat)](Tape& tp, const Matrix& g) {
        if (tp.needs_grad(x)) {
          const double b = static_cast<double>(g.rows());
          const Matrix dxhat = (g.array().rowwise() * gamma.value().row(0).array()).matrix();
          const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
          const Eigen::RowVectorXd sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
          Matrix dx = (b * dxhat.array()).matrix();
          dx.rowwise() -= sum_d;
          dx -= (xhat.array().rowwise() * sum_dx.array()).matrix();
          dx = (dx.array().rowwise() * (inv_std.array() / b)).matrix();
          tp.accumulate(x, dx);
        }
        tp.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
        tp.accumulate(beta, g.colwise().sum());
      });
}

// ---------------------------------------------------------------------------
// Finite differences

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

GradCheckResult finite_diff_check(const TapedFunction& f, const Matrix& x0, double step,
                                  const std::vector<std::size_t>& indices) {
  Matrix analytic;
  {
    Tape tape;
    Var x = tape.leaf(x0);
    Var loss = f(tape, x);
    tape.backward(loss);
    analytic = x.grad();
  }
  auto eval = [&](const Matrix& xv) {
    Tape tape;
    Var x = tape.leaf(xv);
    return f(tape, x).scalar();
  };

  std::vector<std::size_t> probe = indices;
  if (probe.empty()) {
    probe.resize(static_cast<std::size_t>(x0.size()));
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = i;
  }
  GradCheckResult result;
  for (std::size_t i : probe) {
    if (i >= static_cast<std::size_t>(x0.size()))
      throw std::out_of_range("finite_diff_check: index out of range");
    const auto idx = static_cast<Eigen::Index>(i);
    Matrix xp = x0;
    Matrix xm = x0;
    xp.data()[idx] += step;
    xm.data()[idx] -= step;
    const double numeric = (eval(xp) - eval(xm)) / (2.0 * step);
    const double a = analytic.data()[idx];
    const double err = relative_error(a, numeric);
    if (i == probe.front() || err > result.max_rel_error) result = {err, i, a, numeric};
  }
  return result;
}

}  // namespace beaconopt
