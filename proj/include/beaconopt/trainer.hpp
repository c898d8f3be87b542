#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "beaconopt/allocation.hpp"
#include "beaconopt/checkpoint.hpp"
#include "beaconopt/evaluation.hpp"
#include "beaconopt/geometry.hpp"
#include "beaconopt/inference.hpp"
#include "beaconopt/propagation.hpp"
#include "beaconopt/rng.hpp"

namespace beaconopt {

/// How beacon placement is chosen: learned jointly, or frozen for the whole run.
enum class Placement { kJoint, kRandom, kGrid };

std::string to_string(Placement p);

/// Fields set to -1 (or r_min = 0) are derived from the horizon and map by
/// resolved(); see README for the derivations.
struct TrainConfig {
  std::int64_t iterations = 50000;
  std::int64_t finetune_iters = -1;  // -1: every step after the switch runs at lr_finetune
  int batch = 128;
  double lr = 0.01;
  double lr_finetune = 0.001;
  double momentum = 0.9;
  double weight_lr_mult = 1.0;
  double init_std = 0.01;

  // switch_iter -1: 80% of iterations; gamma -1: alpha(switch) = alpha_at_switch
  AlphaSchedule alpha{1.0, -1.0, -1};
  double alpha_at_switch = 1000.0;
  // Sized for unit-scale maps; period -1: iterations/10
  LambdaSchedule lambda{0.003, 0.25, -1, LambdaMode::kAnnealed};
  RegSign reg_sign = RegSign::kBeaconPenalty;

  std::uint64_t seed = 0;
  NetworkArch arch;  // input_dim follows propagation.channels
  PropagationParams propagation;

  std::int64_t eval_cadence = -1;  // -1: 1% of iterations
  int val_rows = 14;
  int val_cols = 20;

  Placement placement = Placement::kJoint;
  std::size_t random_count = 10;
  int grid_stride = 2;

  /// Copy with every derived field filled in; throws std::invalid_argument
  /// if an invariant fails.
  TrainConfig resolved(const EnvironmentMap& map) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LogRecord {
  std::int64_t iter = 0;
  double loss = 0.0;
  double alpha = 0.0;
  double lambda = 0.0;
  double expected_beacons = 0.0;
  double val_rmse = 0.0;
  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

struct TrainLog {
  std::vector<LogRecord> records;
  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

/// CSV with header `iter,loss,alpha,lambda,expected_beacons,val_rmse`.
void write_log_csv(std::ostream& out, const TrainLog& log);

/// Raised when the loss turns non-finite; carries the state at the failure.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::int64_t iteration, double alpha, double lambda, const std::string& detail);
  std::int64_t iteration;
  double alpha;
  double lambda;
};

using NetworkFn = std::function<Var(Tape& tape, const Var& measurements)>;

/// R(rows) + mean over the batch of |v - f(s(v))|^2 with one noise draw per
/// location (already folded into `inputs`).
Var joint_loss(Tape& tape, std::span<const Vec2> locations, const Var& rows,
               const NetworkFn& network, const PropagationParams& params,
               const MeasurementInputs& inputs, double lambda, RegSign sign);

/// Stepwise optimizer for placement weights and network parameters.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const EnvironmentMap& map);
  static Trainer from_checkpoint(const Checkpoint& ck);

  /// One optimizer step at the current iteration.
  void step();
  /// Steps until `iteration() == until` (or the end of the run when negative).
  void run(std::int64_t until = -1);
  bool done() const { return t_ >= cfg_.iterations; }

  Checkpoint checkpoint() const;

  std::int64_t iteration() const { return t_; }
  bool switched() const { return switched_; }
  const TrainConfig& config() const { return cfg_; }
  const EnvironmentMap& map() const { return map_; }
  const InferenceNetwork& network() const { return net_; }
  const Matrix& weights() const { return weights_; }
  /// Frozen placement after the switch, arg-max of the weights before it.
  HardAllocation allocation() const;
  const TrainLog& log() const { return log_; }
  double validation_rmse() const;

 private:
  Trainer(TrainConfig config, EnvironmentMap map, bool fresh);

  double current_alpha() const;
  double current_lambda() const;

  TrainConfig cfg_;
  EnvironmentMap map_;
  Rng rng_;
  InferenceNetwork net_;
  SgdState net_opt_;
  Matrix weights_;
  SgdState weight_opt_;
  HardAllocation hard_;
  bool switched_ = false;
  std::int64_t t_ = 0;
  TrainLog log_;
};

struct TrainResult {
  InferenceNetwork network;
  HardAllocation allocation;
  TrainLog log;
};

TrainResult train(const TrainConfig& config, const EnvironmentMap& map);

/// Eval-mode predictor bound to a copy of `net`.
Predictor network_predictor(const InferenceNetwork& net);

}  // namespace beaconopt
