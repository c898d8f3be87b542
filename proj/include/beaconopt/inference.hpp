#pragma once

#include <span>
#include <string>
#include <vector>

#include "beaconopt/rng.hpp"
#include "beaconopt/tape.hpp"

namespace beaconopt {

/// Blocks of two (affine -> batch-norm -> ReLU) layers, each block followed
/// by max-pooling over disjoint groups of `pool_group` units; the pooled
/// width hidden/pool_group feeds the next block, and a final affine layer
/// produces (x, y).
struct NetworkArch {
  int input_dim = 4;
  int blocks = 3;
  int hidden = 128;
  int pool_group = 4;
  int output_dim = 2;

  void validate() const;
  int pooled() const { return hidden / pool_group; }
  friend bool operator==(const NetworkArch&, const NetworkArch&) = default;
};

/// Closed-form parameter count for an architecture (trainable entries only).
std::size_t parameter_count(const NetworkArch& arch);

enum class Mode { kTrain, kEval };

class InferenceNetwork {
 public:
  /// Hidden affine layers carry no bias: the batch-norm shift plays that role.
  struct HiddenLayer {
    Matrix weight;  // in x hidden
    Matrix gamma;   // 1 x hidden
    Matrix beta;    // 1 x hidden
    BatchNormStats stats;
  };

  InferenceNetwork() = default;
  /// Fan-in scaled uniform(+-sqrt(6/fan_in)) weights, zero bias, unit scale.
  InferenceNetwork(const NetworkArch& arch, Rng& rng);

  const NetworkArch& arch() const { return arch_; }
  Mode mode = Mode::kTrain;

  /// Trainable tensors in a fixed order: per hidden layer (weight, gamma,
  /// beta), then output weight and bias.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t num_parameters() const;

  std::vector<HiddenLayer>& hidden_layers() { return hidden_; }
  const std::vector<HiddenLayer>& hidden_layers() const { return hidden_; }
  Matrix& output_weight() { return out_weight_; }
  Matrix& output_bias() { return out_bias_; }

  friend bool operator==(const InferenceNetwork& a, const InferenceNetwork& b);

 private:
  NetworkArch arch_;
  std::vector<HiddenLayer> hidden_;
  Matrix out_weight_;
  Matrix out_bias_;
};

struct ForwardResult {
  Var output;               // B x 2
  std::vector<Var> params;  // leaves matching parameters() order
};

/// Records the network on `tape`. Train mode uses batch statistics and
/// updates running statistics; eval mode reads them.
ForwardResult forward(InferenceNetwork& net, Tape& tape, const Var& input);

/// Same wiring with caller-supplied parameter variables (parameters() order);
/// only the batch-norm running statistics of `net` are used or updated.
Var forward_with(InferenceNetwork& net, Tape& tape, const Var& input, std::span<const Var> params);

/// Eval-mode inference without touching `net`. batch is B x input_dim.
Matrix predict(const InferenceNetwork& net, const Matrix& batch);

struct SgdState {
  std::vector<Matrix> velocity;
};

/// Classical momentum: v <- momentum * v + g; p <- p - lr * v.
void sgd_step(std::vector<Matrix*> params, const std::vector<Matrix>& grads, SgdState& state,
              double lr, double momentum);

}  // namespace beaconopt
