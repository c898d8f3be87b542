#include <gtest/gtest.h>

#include "beaconopt/inference.hpp"
#include "beaconopt/propagation.hpp"

using namespace beaconopt;

namespace {

std::size_t counted_parameters(const InferenceNetwork& net) {
  std::size_t n = 0;
  for (const auto* p : net.parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

}  // namespace

TEST(Network, ParameterCountOracle) {
  const NetworkArch arch{8, 3, 128, 4, 2};
  // block 0: 8*128 + 2*128 + 128*128 + 2*128; blocks 1-2: 32*128 + 2*128 + 128*128 + 2*128;
  // head: 32*2 + 2
  EXPECT_EQ(parameter_count(arch), 59970u);
  Rng rng(1);
  const InferenceNetwork net(arch, rng);
  EXPECT_EQ(counted_parameters(net), 59970u);
  EXPECT_EQ(net.num_parameters(), 59970u);
  EXPECT_EQ(net.parameter_names().size(), net.parameters().size());
}

TEST(Network, InitDeterministicAndBounded) {
  const NetworkArch arch{4, 2, 16, 4, 2};
  Rng a(7);
  Rng b(7);
  const InferenceNetwork n1(arch, a);
  const InferenceNetwork n2(arch, b);
  EXPECT_TRUE(n1 == n2);
  const auto& l0 = n1.hidden_layers()[0];
  EXPECT_LE(l0.weight.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 4.0));
  EXPECT_EQ(l0.gamma, Matrix::Ones(1, 16));
  EXPECT_EQ(l0.beta, Matrix::Zero(1, 16));
  Rng c(8);
  EXPECT_FALSE(n1 == InferenceNetwork(arch, c));
}

TEST(Network, RejectsBadArch) {
  Rng rng(1);
  EXPECT_THROW(InferenceNetwork(NetworkArch{4, 3, 128, 3, 2}, rng), std::invalid_argument);
  EXPECT_THROW(InferenceNetwork(NetworkArch{4, 0, 128, 4, 2}, rng), std::invalid_argument);
}

TEST(Network, EvalSingleRowAndZeroInput) {
  Rng rng(2);
  const InferenceNetwork net(NetworkArch{}, rng);
  const Matrix out = predict(net, Matrix::Zero(1, 4));
  ASSERT_EQ(out.rows(), 1);
  ASSERT_EQ(out.cols(), 2);
  EXPECT_TRUE(out.allFinite());
  InferenceNetwork train_copy = net;
  Tape t;
  EXPECT_THROW(forward(train_copy, t, t.constant(Matrix::Zero(1, 4))), ShapeError);
  EXPECT_THROW(predict(net, Matrix::Zero(3, 5)), ShapeError);
  EXPECT_TRUE(forward(train_copy, t, t.constant(Matrix::Zero(6, 4))).output.value().allFinite());
}

TEST(Network, GoldenOutput) {
  Rng rng(42);
  const InferenceNetwork net(NetworkArch{}, rng);
  Matrix in(2, 4);
  in << 0.01, 0.02, 0.0, 0.3, 0.5, 0.0, 0.001, 0.04;
  const Matrix out = predict(net, in);
  const Matrix again = predict(net, in);
  EXPECT_EQ(out, again);
  // Snapshot recorded from the first build.
  Matrix golden(2, 2);
  golden << 1.6151150024972682, 0.39668393077108305, 2.6999808183584522, 1.2028849439212643;
  // Loose enough to survive a change of SIMD width or FMA contraction.
  EXPECT_LT((out - golden).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Network, EvalIsPureTrainTouchesOnlyRunningStats) {
  Rng rng(3);
  InferenceNetwork net(NetworkArch{4, 2, 16, 4, 2}, rng);
  const InferenceNetwork before = net;
  predict(net, Matrix::Random(5, 4));
  EXPECT_TRUE(net == before);

  Tape t;
  forward(net, t, t.constant(Matrix::Random(8, 4)));
  const auto p_now = net.parameters();
  const auto p_then = before.parameters();
  for (std::size_t i = 0; i < p_now.size(); ++i) EXPECT_EQ(*p_now[i], *p_then[i]);
  EXPECT_NE(net.hidden_layers()[0].stats.running_mean, before.hidden_layers()[0].stats.running_mean);
}

TEST(Sgd, Examples) {
  Matrix p = Matrix::Constant(1, 1, 1.0);
  SgdState s;
  sgd_step({&p}, {Matrix::Constant(1, 1, 2.0)}, s, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(p(0, 0), 0.8);

  Matrix q = Matrix::Zero(1, 1);
  SgdState m;
  sgd_step({&q}, {Matrix::Ones(1, 1)}, m, 1.0, 0.9);
  EXPECT_DOUBLE_EQ(q(0, 0), -1.0);
  sgd_step({&q}, {Matrix::Ones(1, 1)}, m, 1.0, 0.9);
  EXPECT_DOUBLE_EQ(q(0, 0), -2.9);

  const double v = m.velocity[0](0, 0);
  sgd_step({&q}, {Matrix::Zero(1, 1)}, m, 1.0, 0.9);
  EXPECT_DOUBLE_EQ(m.velocity[0](0, 0), 0.9 * v);

  Matrix z = Matrix::Constant(2, 2, 5.0);
  SgdState fresh;
  sgd_step({&z}, {Matrix::Zero(2, 2)}, fresh, 0.1, 0.9);
  EXPECT_EQ(z, Matrix::Constant(2, 2, 5.0));
  EXPECT_THROW(sgd_step({&z}, {Matrix::Zero(1, 2)}, fresh, 0.1, 0.9), ShapeError);
}

TEST(Network, OverfitsFrozenBatch) {
  const auto map = make_preset("tworoom", 10, 10);
  const auto params = PropagationParams::for_map(map, 4);
  HardAllocation alloc;
  alloc.channels = 4;
  alloc.assignment.assign(map.num_candidates(), 0);
  alloc.assignment[11] = 1;
  alloc.assignment[18] = 2;
  alloc.assignment[81] = 3;
  alloc.assignment[88] = 4;
  double ratio_sum = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    Rng rng(seed);
    const auto locs = sample_locations(map, 64, rng);
    std::vector<NoiseDraw> noise;
    for (std::size_t i = 0; i < locs.size(); ++i) noise.push_back(sample_noise(params, map.num_candidates(), rng));
    const Matrix s = measure_batch(params, map, alloc, locs, noise);
    Matrix target(64, 2);
    for (Eigen::Index i = 0; i < 64; ++i) target.row(i) << locs[static_cast<std::size_t>(i)].x, locs[static_cast<std::size_t>(i)].y;

    InferenceNetwork net(NetworkArch{}, rng);
    SgdState opt;
    double first = 0.0;
    double last = 0.0;
    for (int step = 0; step < 2000; ++step) {
      Tape t;
      auto r = forward(net, t, t.constant(s));
      const Var loss = mean(square(sub(r.output, t.constant(target))));
      if (step == 0) first = loss.scalar();
      last = loss.scalar();
      t.backward(loss);
      std::vector<Matrix> grads;
      for (const auto& p : r.params) grads.push_back(p.grad());
      sgd_step(net.parameters(), grads, opt, 0.01, 0.9);
    }
    ratio_sum += first / last;
  }
  EXPECT_GE(ratio_sum / 3.0, 100.0);
}
