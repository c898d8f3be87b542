#include "beaconopt/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "beaconopt/allocation.hpp"
#include "beaconopt/inference.hpp"
#include "beaconopt/numfmt.hpp"
#include "beaconopt/propagation.hpp"
#include "beaconopt/trainer.hpp"

namespace beaconopt {

bool SelfCheckReport::passed() const {
  return std::all_of(lines.begin(), lines.end(), [](const auto& l) { return l.passed; });
}

namespace {

constexpr int kPointsPerPrimitive = 10;

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo, double hi) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Entries uniform in [lo, hi] with a random sign: keeps points off kinks at 0.
Matrix signed_away_from_zero(Eigen::Index r, Eigen::Index c, Rng& rng, double lo, double hi) {
  Matrix m = random_matrix(r, c, rng, lo, hi);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (rng.uniform() < 0.5) m.data()[i] = -m.data()[i];
  return m;
}

// Weighted sum of an op's output, so every output entry carries a generic weight.
Var contract(Tape& t, const Var& y, const Matrix& w) { return sum(mul(y, t.constant(w))); }

class Checker {
 public:
  explicit Checker(const SelfCheckOptions& o) : opt_(o) {}

  // Runs `f` at kPointsPerPrimitive inputs drawn by `point`.
  void gradient(const std::string& name, const std::function<Matrix(Rng&)>& point,
                const std::function<TapedFunction(Rng&)>& make_fn, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int i = 0; i < kPointsPerPrimitive; ++i) {
      const Matrix x0 = point(rng);
      const TapedFunction f = make_fn(rng);
      worst = std::max(worst, finite_diff_check(f, x0, opt_.step).max_rel_error);
    }
    add_gradient_line(name, worst, "");
  }

  void add_gradient_line(const std::string& name, double err, const std::string& detail) {
    report_.worst_gradient_error = std::max(report_.worst_gradient_error, err);
    report_.lines.push_back({name, err, err < opt_.tolerance, detail});
  }

  void invariant(const std::string& name, bool ok, const std::string& detail) {
    report_.lines.push_back({name, 0.0, ok, detail});
  }

  SelfCheckReport take() { return std::move(report_); }
  const SelfCheckOptions& options() const { return opt_; }

 private:
  SelfCheckOptions opt_;
  SelfCheckReport report_;
};

// Unary elementwise primitive on a 3x4 input.
void check_unary(Checker& ck, const std::string& name, std::function<Var(const Var&)> op,
                 std::function<Matrix(Rng&)> point, std::uint64_t seed) {
  ck.gradient(name, point,
              [op](Rng& rng) -> TapedFunction {
                Matrix w = random_matrix(3, 4, rng, -1.0, 1.0);
                return [op, w](Tape& t, const Var& x) { return contract(t, op(x), w); };
              },
              seed);
}

void check_primitives(Checker& ck) {
  auto generic = [](Rng& r) { return random_matrix(3, 4, r, -1.5, 1.5); };
  auto positive = [](Rng& r) { return random_matrix(3, 4, r, 0.5, 2.0); };
  std::uint64_t seed = 100;

  // Binary ops: x as each operand, with and without broadcasting.
  using Binary = std::function<Var(const Var&, const Var&)>;
  const std::vector<std::pair<std::string, Binary>> binaries = {
      {"add", [](const Var& a, const Var& b) { return add(a, b); }},
      {"sub", [](const Var& a, const Var& b) { return sub(a, b); }},
      {"mul", [](const Var& a, const Var& b) { return mul(a, b); }},
      {"div", [](const Var& a, const Var& b) { return div(a, b); }},
  };
  for (const auto& [name, op] : binaries) {
    for (int variant = 0; variant < 3; ++variant) {
      // 0: x left (3x4), other 3x4; 1: x right (3x4); 2: x broadcast row (1x4) on the right.
      const std::string label = name + (variant == 0 ? "(x, c)" : variant == 1 ? "(c, x)" : "(c, row x)");
      ck.gradient(
          label,
          [variant](Rng& r) {
            return variant == 2 ? random_matrix(1, 4, r, 0.5, 2.0) : random_matrix(3, 4, r, 0.5, 2.0);
          },
          [op, variant](Rng& rng) -> TapedFunction {
            Matrix other = random_matrix(3, 4, rng, 0.5, 2.0);
            Matrix w = random_matrix(3, 4, rng, -1.0, 1.0);
            return [op, variant, other, w](Tape& t, const Var& x) {
              const Var c = t.constant(other);
              return contract(t, variant == 0 ? op(x, c) : op(c, x), w);
            };
          },
          seed++);
    }
  }
  check_unary(ck, "scale", [](const Var& x) { return scale(x, -2.5); }, generic, seed++);
  ck.gradient("matmul(x, c)", [](Rng& r) { return random_matrix(3, 5, r, -1, 1); },
              [](Rng& rng) -> TapedFunction {
                Matrix b = random_matrix(5, 2, rng, -1, 1);
                Matrix w = random_matrix(3, 2, rng, -1, 1);
                return [b, w](Tape& t, const Var& x) { return contract(t, matmul(x, t.constant(b)), w); };
              },
              seed++);
  ck.gradient("matmul(c, x)", [](Rng& r) { return random_matrix(5, 2, r, -1, 1); },
              [](Rng& rng) -> TapedFunction {
                Matrix a = random_matrix(3, 5, rng, -1, 1);
                Matrix w = random_matrix(3, 2, rng, -1, 1);
                return [a, w](Tape& t, const Var& x) { return contract(t, matmul(t.constant(a), x), w); };
              },
              seed++);
  ck.gradient("sum", generic,
              [](Rng&) -> TapedFunction { return [](Tape&, const Var& x) { return square(sum(x)); }; },
              seed++);
  ck.gradient("mean", generic,
              [](Rng&) -> TapedFunction { return [](Tape&, const Var& x) { return square(mean(x)); }; },
              seed++);
  ck.gradient("sum_rows", generic,
              [](Rng& rng) -> TapedFunction {
                Matrix w = random_matrix(1, 4, rng, -1, 1);
                return [w](Tape& t, const Var& x) { return contract(t, sum_rows(x), w); };
              },
              seed++);
  check_unary(ck, "relu", [](const Var& x) { return relu(x); },
              [](Rng& r) { return signed_away_from_zero(3, 4, r, 0.1, 1.5); }, seed++);
  check_unary(ck, "sqrt", [](const Var& x) { return sqrt(x); }, positive, seed++);
  check_unary(ck, "cos", [](const Var& x) { return cos(x); }, generic, seed++);
  check_unary(ck, "sin", [](const Var& x) { return sin(x); }, generic, seed++);
  check_unary(ck, "square", [](const Var& x) { return square(x); }, generic, seed++);
  check_unary(ck, "clip_max", [](const Var& x) { return clip_max(x, 0.0); },
              [](Rng& r) { return signed_away_from_zero(3, 4, r, 0.1, 1.5); }, seed++);
  check_unary(ck, "softmax_scaled", [](const Var& x) { return softmax_scaled(x, 1.7); }, generic,
              seed++);
  ck.gradient("max_pool_groups",
              [](Rng& r) {
                // Distinct values spaced >= 0.05 apart: no ties within a group.
                Matrix m(3, 8);
                std::vector<double> vals(24);
                for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.05 * static_cast<double>(i);
                for (std::size_t i = vals.size(); i > 1; --i) std::swap(vals[i - 1], vals[r.below(i)]);
                for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = vals[static_cast<std::size_t>(i)];
                return m;
              },
              [](Rng& rng) -> TapedFunction {
                Matrix w = random_matrix(3, 2, rng, -1, 1);
                return [w](Tape& t, const Var& x) { return contract(t, max_pool_groups(x, 4), w); };
              },
              seed++);
  ck.gradient("slice_cols", generic,
              [](Rng& rng) -> TapedFunction {
                Matrix w = random_matrix(3, 2, rng, -1, 1);
                return [w](Tape& t, const Var& x) { return contract(t, slice_cols(x, 1, 2), w); };
              },
              seed++);

  for (bool training : {true, false}) {
    const std::string mode = training ? "train" : "eval";
    for (int role = 0; role < 3; ++role) {
      const std::string label =
          "batch_norm[" + mode + "] d/d" + (role == 0 ? "x" : role == 1 ? "scale" : "shift");
      ck.gradient(
          label,
          [role](Rng& r) { return role == 0 ? random_matrix(6, 3, r, -2, 2) : random_matrix(1, 3, r, 0.5, 1.5); },
          [role, training](Rng& rng) -> TapedFunction {
            Matrix x = random_matrix(6, 3, rng, -2, 2);
            Matrix g = random_matrix(1, 3, rng, 0.5, 1.5);
            Matrix b = random_matrix(1, 3, rng, -0.5, 0.5);
            Matrix w = random_matrix(6, 3, rng, -1, 1);
            BatchNormStats stats(3);
            stats.running_mean = random_matrix(1, 3, rng, -0.5, 0.5);
            stats.running_var = random_matrix(1, 3, rng, 0.5, 2.0);
            return [=](Tape& t, const Var& in) mutable {
              BatchNormStats s = stats;
              const Var xv = role == 0 ? in : t.constant(x);
              const Var gv = role == 1 ? in : t.constant(g);
              const Var bv = role == 2 ? in : t.constant(b);
              return contract(t, batch_norm(xv, gv, bv, s, training), w);
            };
          },
          seed++);
    }
  }
}

void check_corrupted(Checker& ck) {
  // square with a deliberately wrong backward rule (3x instead of 2x).
  auto bad_square = [](const Var& a) {
    Tape& t = *a.tape();
    return t.record(a.value().array().square().matrix(), {a}, [a](Tape& tp, const Matrix& g) {
      tp.accumulate(a, (3.0 * g.array() * a.value().array()).matrix());
    });
  };
  check_unary(ck, "corrupted_square (negative control)", bad_square,
              [](Rng& r) { return random_matrix(3, 4, r, 0.5, 1.5); }, 999);
}

struct Scenario {
  EnvironmentMap map = make_preset("tworoom", 5, 5);
  PropagationParams params = PropagationParams::for_map(map, 3);
};

void check_measurement_pipeline(Checker& ck) {
  Scenario sc;
  Rng rng(2024);
  double worst = 0.0;
  int done = 0;
  int attempts = 0;
  while (done < 20 && attempts < 200) {
    ++attempts;
    const Matrix w = random_matrix(static_cast<Eigen::Index>(sc.map.num_candidates()), 4, rng, -1, 1);
    const double alpha = rng.uniform(0.5, 3.0);
    auto locs = sample_locations(sc.map, 4, rng);
    std::vector<NoiseDraw> noise;
    for (std::size_t i = 0; i < locs.size(); ++i)
      noise.push_back(sample_noise(sc.params, sc.map.num_candidates(), rng));
    const auto inputs = measurement_inputs(sc.params, sc.map, locs, noise);
    const Matrix coeff = random_matrix(4, 3, rng, -1, 1);
    const TapedFunction f = [&](Tape& t, const Var& x) {
      return contract(t, measure_rows(sc.params, inputs, relax(x, alpha)), coeff);
    };
    {
      Tape t;
      const Matrix s = measure_rows(sc.params, inputs, relax(t.constant(w), alpha)).value();
      if ((s.array() > sc.params.tau - 1e-3).any()) continue;  // gradient checked on unsaturated channels
    }
    worst = std::max(worst, finite_diff_check(f, w, ck.options().step).max_rel_error);
    ++done;
  }
  ck.add_gradient_line("relaxed measurement d/dw", worst,
                       std::to_string(done) + " configurations");
}

void check_full_loss(Checker& ck) {
  Scenario sc;
  sc.params = PropagationParams::for_map(sc.map, 4);
  Rng rng(77);
  NetworkArch arch{4, 2, 16, 4, 2};
  const InferenceNetwork net(arch, rng);
  const Matrix w = init_allocation_weights(sc.map.num_candidates(), 4, rng, 0.3);
  const auto locs = sample_locations(sc.map, 16, rng);
  std::vector<NoiseDraw> noise;
  for (std::size_t i = 0; i < locs.size(); ++i)
    noise.push_back(sample_noise(sc.params, sc.map.num_candidates(), rng));
  const auto inputs = measurement_inputs(sc.params, sc.map, locs, noise);
  const double alpha = 2.0;
  const double lambda = 0.05;

  const auto base = net.parameters();
  double worst = 0.0;
  for (int probe = 0; probe < 32; ++probe) {
    const std::size_t k = rng.below(base.size());
    const std::size_t idx = rng.below(static_cast<std::uint64_t>(base[k]->size()));
    const TapedFunction f = [&](Tape& t, const Var& x) {
      InferenceNetwork local = net;
      std::vector<Var> params;
      for (std::size_t i = 0; i < base.size(); ++i)
        params.push_back(i == k ? x : t.constant(*base[i]));
      const NetworkFn fn = [&](Tape& tp, const Var& m) { return forward_with(local, tp, m, params); };
      const Var rows = relax(t.constant(w), alpha);
      return joint_loss(t, locs, rows, fn, sc.params, inputs, lambda, RegSign::kBeaconPenalty);
    };
    worst = std::max(worst, finite_diff_check(f, *base[k], ck.options().step, {idx}).max_rel_error);
  }
  ck.add_gradient_line("full loss d/dtheta", worst, "32 random network parameters");
}

void check_invariants(Checker& ck) {
  Scenario sc;
  Rng rng(5);
  const std::size_t L = sc.map.num_candidates();

  // Saturation bound over random allocations and noise.
  bool saturation_ok = true;
  for (int i = 0; i < 200; ++i) {
    HardAllocation h;
    h.channels = sc.params.channels;
    for (std::size_t l = 0; l < L; ++l) h.assignment.push_back(static_cast<int>(rng.below(4)));
    const Vec2 v = sample_locations(sc.map, 1, rng)[0];
    const auto m = measure(sc.params, sc.map, h, v, sample_noise(sc.params, L, rng));
    for (double s : m.s) saturation_ok = saturation_ok && s >= 0.0 && s <= sc.params.tau;
  }
  ck.invariant("measurement within [0, tau]", saturation_ok, "200 random draws");

  // A lone zero-noise beacon reads min(tau, P) whatever its phase.
  double worst_phase = 0.0;
  for (int i = 0; i < 200; ++i) {
    HardAllocation h;
    h.channels = sc.params.channels;
    h.assignment.assign(L, 0);
    const std::size_t l = rng.below(L);
    h.assignment[l] = 1;
    const Vec2 v = sample_locations(sc.map, 1, rng)[0];
    std::vector<double> phases(L);
    for (auto& p : phases) p = 2.0 * std::numbers::pi * rng.uniform();
    const auto m = measure(sc.params, sc.map, h, v, noiseless(phases, sc.params.channels));
    const double expect =
        std::min(sc.params.tau, received_power(sc.params, sc.map, sc.map.candidates()[l], v));
    worst_phase = std::max(worst_phase, std::abs(m.s[0] - expect));
  }
  ck.invariant("single beacon reads min(tau, P)", worst_phase < 1e-12,
               "max deviation " + fmt_num(worst_phase));

  // Relaxed model on one-hot rows reproduces the hard model.
  double worst_relax = 0.0;
  for (int i = 0; i < 50; ++i) {
    HardAllocation h;
    h.channels = sc.params.channels;
    for (std::size_t l = 0; l < L; ++l) h.assignment.push_back(static_cast<int>(rng.below(4)));
    const Vec2 v = sample_locations(sc.map, 1, rng)[0];
    const NoiseDraw nd = sample_noise(sc.params, L, rng);
    const auto hard = measure(sc.params, sc.map, h, v, nd);
    Tape t;
    const Matrix soft = measure_relaxed(sc.params, sc.map, t.constant(one_hot(h)), v, nd).value();
    for (std::size_t c = 0; c < hard.s.size(); ++c)
      worst_relax = std::max(worst_relax, std::abs(hard.s[c] - soft(0, static_cast<Eigen::Index>(c))));
  }
  ck.invariant("relaxed == hard on one-hot rows", worst_relax <= 1e-12,
               "max deviation " + fmt_num(worst_relax));

  // Relaxed rows are probability vectors.
  const RelaxedAllocation r = relax(init_allocation_weights(L, 3, rng, 1.0), 3.0);
  const double row_err = (r.rows.rowwise().sum().array() - 1.0).abs().maxCoeff();
  ck.invariant("relaxed rows sum to 1", row_err < 1e-9 && (r.rows.array() > 0.0).all(),
               "max deviation " + fmt_num(row_err));
}

}  // namespace

SelfCheckReport run_selfcheck(const SelfCheckOptions& options) {
  Checker ck(options);
  check_primitives(ck);
  if (options.corrupt_backward) check_corrupted(ck);
  check_measurement_pipeline(ck);
  check_full_loss(ck);
  check_invariants(ck);
  return ck.take();
}

std::string format_selfcheck(const SelfCheckReport& report) {
  std::ostringstream os;
  for (const auto& l : report.lines) {
    os << (l.passed ? "PASS " : "FAIL ") << l.name;
    if (l.max_rel_error > 0.0) os << "  max_rel_error=" << fmt_num(l.max_rel_error);
    if (!l.detail.empty()) os << "  (" << l.detail << ")";
    os << '\n';
  }
  os << "worst relative gradient error: " << fmt_num(report.worst_gradient_error) << '\n';
  os << (report.passed() ? "selfcheck passed" : "selfcheck FAILED") << '\n';
  return os.str();
}

}  // namespace beaconopt
