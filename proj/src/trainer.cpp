#include "beaconopt/trainer.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "beaconopt/baselines.hpp"
#include "beaconopt/config.hpp"
#include "beaconopt/numfmt.hpp"

namespace beaconopt {

std::string to_string(Placement p) {
  switch (p) {
    case Placement::kJoint: return "joint";
    case Placement::kRandom: return "random";
    case Placement::kGrid: return "grid";
  }
  return "joint";
}

TrainConfig TrainConfig::resolved(const EnvironmentMap& map) const {
  TrainConfig c = *this;
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (c.iterations < 1) fail("iterations must be positive");
  if (c.alpha.switch_iter < 0) c.alpha.switch_iter = (c.iterations * 4) / 5;
  if (c.finetune_iters < 0) c.finetune_iters = c.iterations - c.alpha.switch_iter;
  if (c.alpha.gamma < 0.0) {
    const double s = static_cast<double>(std::max<std::int64_t>(c.alpha.switch_iter, 1));
    c.alpha.gamma = std::max(0.0, (c.alpha_at_switch / c.alpha.alpha0 - 1.0) / (s * s));
  }
  if (c.lambda.period < 0) c.lambda.period = std::max<std::int64_t>(c.iterations / 10, 1);
  if (c.eval_cadence < 0) c.eval_cadence = std::max<std::int64_t>(c.iterations / 100, 1);
  if (c.propagation.r_min <= 0.0) c.propagation.r_min = map.half_candidate_spacing();
  c.arch.input_dim = c.propagation.channels;

  if (c.alpha.switch_iter >= c.iterations) fail("switch point must precede the end of training");
  if (c.finetune_iters > c.iterations) fail("fine-tune length exceeds the run");
  if (c.batch < 2) fail("batch must be at least 2");
  if (!(c.alpha.alpha0 > 0.0)) fail("alpha0 must be positive");
  if (!(c.lambda.eta > 0.0 && c.lambda.eta <= 1.0)) fail("lambda eta must lie in (0, 1]");
  if (!(c.lambda.lambda0 >= 0.0)) fail("lambda0 must be nonnegative");
  if (c.lambda.period < 1) fail("lambda period must be positive");
  if (c.eval_cadence < 1) fail("eval cadence must be positive");
  if (c.val_rows < 1 || c.val_cols < 1) fail("validation grid must be nonempty");
  if (!(c.lr > 0.0) || !(c.lr_finetune > 0.0)) fail("learning rates must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (c.placement == Placement::kRandom && c.random_count > map.num_candidates())
    fail("random_count exceeds the number of candidates");
  if (c.grid_stride < 1) fail("grid_stride must be positive");
  c.propagation.validate();
  c.arch.validate();
  return c;
}

void write_log_csv(std::ostream& out, const TrainLog& log) {
  out << "iter,loss,alpha,lambda,expected_beacons,val_rmse\n";
  for (const auto& r : log.records)
    out << r.iter << ',' << fmt_num(r.loss) << ',' << fmt_num(r.alpha) << ',' << fmt_num(r.lambda)
        << ',' << fmt_num(r.expected_beacons) << ',' << fmt_num(r.val_rmse) << '\n';
}

TrainingAborted::TrainingAborted(std::int64_t it, double a, double l, const std::string& detail)
    : std::runtime_error("training aborted at iteration " + std::to_string(it) +
                         " (alpha=" + fmt_num(a) + ", lambda=" + fmt_num(l) + "): " + detail),
      iteration(it),
      alpha(a),
      lambda(l) {}

Var joint_loss(Tape& tape, std::span<const Vec2> locations, const Var& rows,
               const NetworkFn& network, const PropagationParams& params,
               const MeasurementInputs& inputs, double lambda, RegSign sign) {
  if (locations.empty()) throw std::invalid_argument("joint_loss: empty batch");
  Matrix target(static_cast<Eigen::Index>(locations.size()), 2);
  for (std::size_t i = 0; i < locations.size(); ++i) {
    target(static_cast<Eigen::Index>(i), 0) = locations[i].x;
    target(static_cast<Eigen::Index>(i), 1) = locations[i].y;
  }
  const Var s = measure_rows(params, inputs, rows);
  const Var estimate = network(tape, s);
  const Var residual = sub(estimate, tape.constant(std::move(target)));
  const Var fit = scale(sum(square(residual)), 1.0 / static_cast<double>(locations.size()));
  return add(regularizer(rows, lambda, sign), fit);
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig config, EnvironmentMap map, bool)
    : cfg_(std::move(config)), map_(std::move(map)), rng_(cfg_.seed) {}

Trainer::Trainer(const TrainConfig& config, const EnvironmentMap& map)
    : Trainer(config.resolved(map), map, true) {
  net_ = InferenceNetwork(cfg_.arch, rng_);
  weights_ = init_allocation_weights(map_.num_candidates(), cfg_.propagation.channels, rng_,
                                     cfg_.init_std);
  const int C = cfg_.propagation.channels;
  if (cfg_.placement == Placement::kRandom) {
    hard_ = handcrafted_allocation(map_, C, RandomPlacement{cfg_.random_count}, rng_);
    switched_ = true;
  } else if (cfg_.placement == Placement::kGrid) {
    hard_ = handcrafted_allocation(map_, C, UniformGrid{cfg_.grid_stride});
    switched_ = true;
  }
}

double Trainer::current_alpha() const {
  return switched_ ? std::numeric_limits<double>::infinity() : alpha_at(cfg_.alpha, t_);
}

double Trainer::current_lambda() const { return lambda_at(cfg_.lambda, t_); }

HardAllocation Trainer::allocation() const { return switched_ ? hard_ : harden(weights_); }

Predictor network_predictor(const InferenceNetwork& net) {
  return [net](const Matrix& batch) { return predict(net, batch); };
}

double Trainer::validation_rmse() const {
  const auto locs = grid_points(map_.width(), map_.height(), cfg_.val_rows, cfg_.val_cols);
  const auto seed = Rng::derive(cfg_.seed, 0x76616c00ULL + static_cast<std::uint64_t>(t_)).next_u64();
  return evaluate_at(network_predictor(net_), allocation(), map_, cfg_.propagation, locs, 1, {},
                     seed)
      .rmse;
}

void Trainer::step() {
  if (done()) throw std::logic_error("training already finished");
  if (!switched_ && t_ >= cfg_.alpha.switch_iter) {
    hard_ = harden(weights_);
    switched_ = true;
  }
  const double alpha = current_alpha();
  const double lambda = current_lambda();
  const bool fine_tune = t_ >= cfg_.iterations - cfg_.finetune_iters;
  const double lr = fine_tune ? cfg_.lr_finetune : cfg_.lr;

  const auto B = static_cast<std::size_t>(cfg_.batch);
  const auto locations = sample_locations(map_, B, rng_);
  std::vector<NoiseDraw> noise;
  noise.reserve(B);
  for (std::size_t i = 0; i < B; ++i)
    noise.push_back(sample_noise(cfg_.propagation, map_.num_candidates(), rng_));
  const auto inputs = measurement_inputs(cfg_.propagation, map_, locations, noise);

  Tape tape;
  Var weight_leaf;
  Var rows;
  if (switched_) {
    rows = tape.constant(one_hot(hard_));
  } else {
    weight_leaf = tape.leaf(weights_);
    rows = relax(weight_leaf, alpha);
  }
  std::vector<Var> net_params;
  const NetworkFn f = [&](Tape& tp, const Var& m) {
    auto r = forward(net_, tp, m);
    net_params = std::move(r.params);
    return r.output;
  };
  const Var loss =
      joint_loss(tape, locations, rows, f, cfg_.propagation, inputs, lambda, cfg_.reg_sign);
  const double loss_value = loss.scalar();
  if (!std::isfinite(loss_value)) {
    std::ostringstream os;
    os << "non-finite loss " << loss_value << "; max |w| = " << weights_.cwiseAbs().maxCoeff();
    throw TrainingAborted(t_, alpha, lambda, os.str());
  }
  tape.backward(loss);

  std::vector<Matrix> grads;
  grads.reserve(net_params.size());
  for (const auto& p : net_params) grads.push_back(p.grad());
  for (const auto& g : grads) {
    if (!g.allFinite()) throw TrainingAborted(t_, alpha, lambda, "non-finite network gradient");
  }
  sgd_step(net_.parameters(), grads, net_opt_, lr, cfg_.momentum);
  if (!switched_) {
    const Matrix& gw = weight_leaf.grad();
    if (!gw.allFinite()) throw TrainingAborted(t_, alpha, lambda, "non-finite placement gradient");
    sgd_step({&weights_}, {gw}, weight_opt_, lr * cfg_.weight_lr_mult, cfg_.momentum);
  }

  const double expected = expected_beacon_count(rows.value());
  ++t_;
  if (t_ % cfg_.eval_cadence == 0 || t_ == cfg_.iterations) {
    log_.records.push_back(
        LogRecord{t_, loss_value, alpha, lambda, expected, validation_rmse()});
  }
}

void Trainer::run(std::int64_t until) {
  const std::int64_t end = until < 0 ? cfg_.iterations : std::min(until, cfg_.iterations);
  while (t_ < end) step();
}

TrainResult train(const TrainConfig& config, const EnvironmentMap& map) {
  Trainer t(config, map);
  t.run();
  return TrainResult{t.network(), t.allocation(), t.log()};
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kFormat = "beaconopt-trainer";

Matrix log_matrix(const TrainLog& log) {
  Matrix m(static_cast<Eigen::Index>(log.records.size()), 6);
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const auto& r = log.records[i];
    m.row(static_cast<Eigen::Index>(i)) << static_cast<double>(r.iter), r.loss, r.alpha, r.lambda,
        r.expected_beacons, r.val_rmse;
  }
  return m;
}

TrainLog log_from_matrix(const Matrix& m) {
  if (m.rows() > 0 && m.cols() != 6) throw CheckpointError("training log has the wrong width");
  TrainLog log;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    log.records.push_back(LogRecord{static_cast<std::int64_t>(m(i, 0)), m(i, 1), m(i, 2), m(i, 3),
                                    m(i, 4), m(i, 5)});
  return log;
}

void put_velocity(Checkpoint& ck, const std::string& prefix, const SgdState& s) {
  ck.put_int(prefix + ".count", static_cast<std::int64_t>(s.velocity.size()));
  for (std::size_t i = 0; i < s.velocity.size(); ++i)
    ck.put(prefix + "." + std::to_string(i), s.velocity[i]);
}

SgdState get_velocity(const Checkpoint& ck, const std::string& prefix) {
  SgdState s;
  const auto n = ck.get_int(prefix + ".count");
  for (std::int64_t i = 0; i < n; ++i) s.velocity.push_back(ck.tensor(prefix + "." + std::to_string(i)));
  return s;
}

void load_tensor(const Checkpoint& ck, const std::string& name, Matrix& dst) {
  const Matrix& src = ck.tensor(name);
  if (src.rows() != dst.rows() || src.cols() != dst.cols())
    throw CheckpointError("checkpoint tensor '" + name + "' is " + shape_str(src) +
                          ", expected " + shape_str(dst));
  dst = src;
}

}  // namespace

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.put("format", std::string(kFormat));
  ck.put("config", format_train_config(cfg_));
  ck.put("map", map_to_string(map_));
  ck.put_int("iteration", t_);
  ck.put_int("switched", switched_ ? 1 : 0);
  ck.put("allocation", std::vector<std::int64_t>(hard_.assignment.begin(), hard_.assignment.end()));
  ck.put("rng", rng_.state());
  const auto names = net_.parameter_names();
  const auto params = net_.parameters();
  for (std::size_t i = 0; i < names.size(); ++i) ck.put("net." + names[i], *params[i]);
  const auto& layers = net_.hidden_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    ck.put("net.layer" + std::to_string(i) + ".running_mean", layers[i].stats.running_mean);
    ck.put("net.layer" + std::to_string(i) + ".running_var", layers[i].stats.running_var);
  }
  put_velocity(ck, "opt.net", net_opt_);
  ck.put("placement.weights", weights_);
  put_velocity(ck, "opt.placement", weight_opt_);
  ck.put("log", log_matrix(log_));
  return ck;
}

Trainer Trainer::from_checkpoint(const Checkpoint& ck) {
  if (!ck.has("format") || ck.text("format") != kFormat)
    throw CheckpointError("not a training checkpoint");
  TrainConfig cfg;
  EnvironmentMap map = [&] {
    try {
      cfg = parse_train_config(ck.text("config"));
      return load_map_string(ck.text("map"));
    } catch (const CheckpointError&) {
      throw;
    } catch (const std::exception& e) {
      throw CheckpointError(std::string("checkpoint metadata is invalid: ") + e.what());
    }
  }();
  Trainer t(cfg, std::move(map), false);
  // Shapes come from a freshly constructed network; values are overwritten.
  Rng scratch(0);
  t.net_ = InferenceNetwork(cfg.arch, scratch);
  t.weights_ = Matrix::Zero(static_cast<Eigen::Index>(t.map_.num_candidates()),
                            cfg.propagation.channels + 1);
  t.t_ = ck.get_int("iteration");
  t.switched_ = ck.get_int("switched") != 0;
  const auto& a = ck.ints("allocation");
  t.hard_.channels = cfg.propagation.channels;
  t.hard_.assignment.assign(a.begin(), a.end());
  if (t.switched_) {
    if (t.hard_.size() != t.map_.num_candidates())
      throw CheckpointError("checkpoint allocation does not match the map");
    try {
      t.hard_.validate();
    } catch (const std::exception& e) {
      throw CheckpointError(e.what());
    }
  }
  t.rng_.set_state(ck.text("rng"));
  const auto names = t.net_.parameter_names();
  const auto params = t.net_.parameters();
  for (std::size_t i = 0; i < names.size(); ++i) load_tensor(ck, "net." + names[i], *params[i]);
  auto& layers = t.net_.hidden_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    load_tensor(ck, "net.layer" + std::to_string(i) + ".running_mean", layers[i].stats.running_mean);
    load_tensor(ck, "net.layer" + std::to_string(i) + ".running_var", layers[i].stats.running_var);
  }
  t.net_opt_ = get_velocity(ck, "opt.net");
  load_tensor(ck, "placement.weights", t.weights_);
  t.weight_opt_ = get_velocity(ck, "opt.placement");
  t.log_ = log_from_matrix(ck.tensor("log"));
  if (t.t_ < 0 || t.t_ > cfg.iterations) throw CheckpointError("checkpoint iteration out of range");
  return t;
}

}  // namespace beaconopt
