#include "beaconopt/inference.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace beaconopt {

void NetworkArch::validate() const {
  if (input_dim < 1) throw std::invalid_argument("input_dim must be positive");
  if (blocks < 1) throw std::invalid_argument("blocks must be at least 1");
  if (hidden < 1) throw std::invalid_argument("hidden must be positive");
  if (pool_group < 1 || hidden % pool_group != 0)
    throw std::invalid_argument("pool_group " + std::to_string(pool_group) +
                                " does not divide hidden width " + std::to_string(hidden));
  if (output_dim != 2) throw std::invalid_argument("output_dim must be 2");
}

std::size_t parameter_count(const NetworkArch& arch) {
  arch.validate();
  const std::size_t h = static_cast<std::size_t>(arch.hidden);
  const std::size_t pooled = static_cast<std::size_t>(arch.pooled());
  std::size_t n = 0;
  for (int b = 0; b < arch.blocks; ++b) {
    const std::size_t in = b == 0 ? static_cast<std::size_t>(arch.input_dim) : pooled;
    n += in * h + 2 * h;  // first layer: weight + bn scale/shift
    n += h * h + 2 * h;   // second layer
  }
  n += pooled * static_cast<std::size_t>(arch.output_dim) + static_cast<std::size_t>(arch.output_dim);
  return n;
}

namespace {

Matrix uniform_fan_in(Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  return w;
}

}  // namespace

InferenceNetwork::InferenceNetwork(const NetworkArch& arch, Rng& rng) : arch_(arch) {
  arch_.validate();
  const Eigen::Index h = arch_.hidden;
  for (int b = 0; b < arch_.blocks; ++b) {
    for (int layer = 0; layer < 2; ++layer) {
      const Eigen::Index in = layer == 1 ? h : (b == 0 ? arch_.input_dim : arch_.pooled());
      hidden_.push_back(HiddenLayer{uniform_fan_in(in, h, rng), Matrix::Ones(1, h),
                                    Matrix::Zero(1, h), BatchNormStats(h)});
    }
  }
  out_weight_ = uniform_fan_in(arch_.pooled(), arch_.output_dim, rng);
  out_bias_ = Matrix::Zero(1, arch_.output_dim);
}

std::vector<Matrix*> InferenceNetwork::parameters() {
  std::vector<Matrix*> p;
  for (auto& l : hidden_) {
    p.push_back(&l.weight);
    p.push_back(&l.gamma);
    p.push_back(&l.beta);
  }
  p.push_back(&out_weight_);
  p.push_back(&out_bias_);
  return p;
}

std::vector<const Matrix*> InferenceNetwork::parameters() const {
  std::vector<const Matrix*> p;
  for (auto* m : const_cast<InferenceNetwork*>(this)->parameters()) p.push_back(m);
  return p;
}

std::vector<std::string> InferenceNetwork::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    const std::string base = "layer" + std::to_string(i) + ".";
    names.push_back(base + "weight");
    names.push_back(base + "bn_scale");
    names.push_back(base + "bn_shift");
  }
  names.push_back("output.weight");
  names.push_back("output.bias");
  return names;
}

std::size_t InferenceNetwork::num_parameters() const {
  std::size_t n = 0;
  for (const auto* m : parameters()) n += static_cast<std::size_t>(m->size());
  return n;
}

bool operator==(const InferenceNetwork& a, const InferenceNetwork& b) {
  if (!(a.arch_ == b.arch_) || a.hidden_.size() != b.hidden_.size()) return false;
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->rows() != pb[i]->rows() || pa[i]->cols() != pb[i]->cols() || *pa[i] != *pb[i])
      return false;
  for (std::size_t i = 0; i < a.hidden_.size(); ++i) {
    if (a.hidden_[i].stats.running_mean != b.hidden_[i].stats.running_mean ||
        a.hidden_[i].stats.running_var != b.hidden_[i].stats.running_var)
      return false;
  }
  return true;
}

ForwardResult forward(InferenceNetwork& net, Tape& tape, const Var& input) {
  ForwardResult r;
  for (const Matrix* p : std::as_const(net).parameters()) r.params.push_back(tape.leaf(*p));
  r.output = forward_with(net, tape, input, r.params);
  return r;
}

Var forward_with(InferenceNetwork& net, Tape& tape, const Var& input, std::span<const Var> params) {
  const NetworkArch& arch = net.arch();
  if (input.cols() != arch.input_dim)
    throw ShapeError("network input is " + shape_str(input.value()) + ", expected width " +
                     std::to_string(arch.input_dim));
  const bool training = net.mode == Mode::kTrain;
  if (training && input.rows() < 2)
    throw ShapeError("train-mode forward needs a batch of at least 2 rows");
  auto& layers = net.hidden_layers();
  if (params.size() != 3 * layers.size() + 2)
    throw std::invalid_argument("forward_with: expected " + std::to_string(3 * layers.size() + 2) +
                                " parameter variables, got " + std::to_string(params.size()));
  for (const Var& p : params)
    if (p.tape() != &tape) throw std::logic_error("forward_with: parameter on a different tape");

  Var x = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = relu(batch_norm(matmul(x, params[3 * i]), params[3 * i + 1], params[3 * i + 2],
                        layers[i].stats, training));
    if (i % 2 == 1) x = max_pool_groups(x, arch.pool_group);
  }
  return add(matmul(x, params[3 * layers.size()]), params[3 * layers.size() + 1]);
}

Matrix predict(const InferenceNetwork& net, const Matrix& batch) {
  InferenceNetwork copy = net;
  copy.mode = Mode::kEval;
  Tape tape;
  return forward(copy, tape, tape.constant(batch)).output.value();
}

void sgd_step(std::vector<Matrix*> params, const std::vector<Matrix>& grads, SgdState& state,
              double lr, double momentum) {
  if (grads.size() != params.size())
    throw std::invalid_argument("sgd_step: parameter/gradient count mismatch");
  if (state.velocity.empty()) {
    for (const auto* p : params) state.velocity.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  if (state.velocity.size() != params.size())
    throw std::invalid_argument("sgd_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = grads[i];
    Matrix& v = state.velocity[i];
    if (g.rows() != p.rows() || g.cols() != p.cols() || v.rows() != p.rows() ||
        v.cols() != p.cols())
      throw ShapeError("sgd_step: shape mismatch for parameter " + std::to_string(i) + " (" +
                       shape_str(p) + " vs gradient " + shape_str(g) + ")");
    v = momentum * v + g;
    p -= lr * v;
  }
}

}  // namespace beaconopt
