#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradient_suite.hpp"
#include "hbrep/error.hpp"
#include "hbrep/nn.hpp"
#include "hbrep/tensor.hpp"

using namespace hbrep;
using namespace hbrep::nn;

namespace {

void expect_gradients(const std::vector<support::GradCase>& cases) {
  for (const auto& c : cases) {
    const auto r = support::run_grad_case(c);
    EXPECT_LT(r.rel_error, support::kGradTolerance) << c.name << " worst tensor " << r.worst;
    EXPECT_GT(r.checked, 0) << c.name;
  }
}

}  // namespace

TEST(Backward, SumAndSquare) {
  Tensor x(Mat{{1.0, 2.0, 3.0}}, true);
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(x));
  }
  EXPECT_EQ(x.grad(), (Mat{{1.0, 1.0, 1.0}}));
  x.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(mul(x, x)));
  }
  EXPECT_EQ(x.grad(), (Mat{{2.0, 4.0, 6.0}}));
}

TEST(Backward, RejectsNonScalarAndDetachedLoss) {
  Tensor x(Mat::Ones(2, 2), true);
  Tape tape;
  TapeScope scope(tape);
  try {
    tape.backward(scale(x, 2.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotScalar);
  }
  try {
    tape.backward(Tensor::scalar(1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DetachedGraph);
  }
}

TEST(Backward, NoTapeRecordsNothing) {
  Tensor x(Mat::Ones(2, 2), true);
  const Tensor y = sum(square(x));
  EXPECT_EQ(y.item(), 4.0);
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Backward, ThreeLayerMlpMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  Mlp a(4, 8, 6, rng), b(6, 5, 2, rng);
  for (Module* m : {static_cast<Module*>(&a), static_cast<Module*>(&b)})
    for (auto& p : m->parameters()) p.tensor.mutable_value() = support::random_mat(p.tensor.rows(), p.tensor.cols(), rng, 0.5);
  const Tensor x = support::random_leaf(3, 4, rng);
  std::vector<support::GradInput> in{{"x", x}};
  for (auto& p : a.parameters()) in.push_back({"a." + p.name, p.tensor});
  for (auto& p : b.parameters()) in.push_back({"b." + p.name, p.tensor});
  const auto r = support::check_gradients([&] { return sum(square(b.forward(a.forward(x)))); }, in, 3, 100);
  EXPECT_LT(r.rel_error, 1e-4) << r.worst;
}

TEST(Gradients, PrimitiveOperations) { expect_gradients(support::primitive_gradient_cases()); }
TEST(Gradients, Layers) { expect_gradients(support::layer_gradient_cases()); }

TEST(Attention, SingleTokenReturnsValueProjection) {
  std::mt19937_64 rng(1);
  MultiHeadAttention mha(8, 2, rng);
  const Tensor x(support::random_mat(1, 8, rng));
  const Tensor out = mha.forward(x, x, nullptr);
  const Mat expected = mha.wo.forward(mha.wv.forward(x)).value();
  EXPECT_LT((out.value() - expected).norm(), 1e-12);
}

TEST(Attention, UniformLogitsGiveUniformWeightsAndMaskIsExact) {
  std::mt19937_64 rng(2);
  MultiHeadAttention mha(8, 2, rng);
  mha.wk.weight.mutable_value().setZero();
  if (mha.wk.bias.defined()) mha.wk.bias.mutable_value().setZero();
  const Tensor q(support::random_mat(3, 8, rng)), kv(support::random_mat(4, 8, rng));
  std::vector<Mat> w;
  mha.forward(q, kv, nullptr, &w);
  ASSERT_EQ(w.size(), 2u);
  for (const Mat& h : w)
    for (long i = 0; i < h.size(); ++i) EXPECT_NEAR(h.data()[i], 0.25, 1e-12);

  BoolMat allowed = BoolMat::Constant(3, 4, true);
  allowed(0, 1) = allowed(2, 3) = false;
  std::vector<Mat> masked;
  MultiHeadAttention full(8, 2, rng);
  full.forward(q, kv, &allowed, &masked);
  for (const Mat& h : masked) {
    EXPECT_EQ(h(0, 1), 0.0);
    EXPECT_EQ(h(2, 3), 0.0);
    for (int r = 0; r < 3; ++r) EXPECT_NEAR(h.row(r).sum(), 1.0, 1e-12);
  }
}

TEST(Gcn, EmptyAdjacencyIsIdentityMessage) {
  const Mat a = normalized_adjacency(3, {});
  EXPECT_TRUE(a.isApprox(Mat::Identity(3, 3)));
}

TEST(Gcn, PathGraphMatchesHandExpansion) {
  const std::vector<std::array<int, 2>> e{{0, 1}, {1, 2}};
  const Mat a = normalized_adjacency(3, e);
  // Degrees with self loops: 2, 3, 2.
  Mat expected(3, 3);
  expected << 1.0 / 2, 1 / std::sqrt(6.0), 0, 1 / std::sqrt(6.0), 1.0 / 3, 1 / std::sqrt(6.0), 0,
      1 / std::sqrt(6.0), 1.0 / 2;
  EXPECT_LT((a - expected).norm(), 1e-14);
  std::mt19937_64 rng(3);
  GcnLayer g(2, 2, rng);
  const Tensor x(support::random_mat(3, 2, rng));
  const Mat direct = gelu(Tensor(Mat(expected * x.value() * g.w.weight.value()))).value();
  EXPECT_LT((g.forward(x, e).value() - direct).norm(), 1e-12);
}

TEST(Gcn, CompleteGraphIdenticalFeatures) {
  std::mt19937_64 rng(4);
  GcnLayer g(3, 4, rng);
  const std::vector<std::array<int, 2>> e{{0, 1}, {0, 2}, {1, 2}};
  const Mat row = support::random_mat(1, 3, rng);
  const Tensor x(Mat(row.replicate(3, 1)));
  const Mat out = g.forward(x, e).value();
  EXPECT_LT((out.row(0) - out.row(1)).norm(), 1e-14);
  EXPECT_LT((out.row(0) - out.row(2)).norm(), 1e-14);
}

TEST(Pointer, SingleAndIdenticalCandidates) {
  std::mt19937_64 rng(5);
  PointerHead p(6, rng);
  const Tensor s(support::random_mat(1, 6, rng));
  EXPECT_NEAR(p.scores(s, Tensor(support::random_mat(1, 6, rng))).value()(0, 0), 1.0, 1e-15);
  const Mat c = support::random_mat(1, 6, rng).replicate(5, 1);
  const Mat probs = p.scores(s, Tensor(c)).value();
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(probs(0, j), 0.2, 1e-12);
  try {
    p.scores(s, Tensor(Mat(0, 6)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCandidates);
  }
}

TEST(AdamW, ZeroGradientNoDecayLeavesParams) {
  Tensor p(Mat::Constant(2, 2, 0.7), true);
  std::vector<Tensor> ps{p};
  std::vector<Mat> gs{Mat::Zero(2, 2)};
  AdamState st;
  OptimizerConfig cfg;
  cfg.weight_decay = 0.0;
  for (int i = 0; i < 5; ++i) adamw_step(ps, gs, st, cfg);
  EXPECT_EQ(p.value(), Mat::Constant(2, 2, 0.7));
}

TEST(AdamW, ConstantGradientStepApproachesLearningRate) {
  Tensor p(Mat::Zero(1, 3), true);
  std::vector<Tensor> ps{p};
  std::vector<Mat> gs{Mat{{0.3, -2.0, 5.0}}};
  AdamState st;
  OptimizerConfig cfg;
  cfg.weight_decay = 0.0;
  Mat prev = p.value();
  for (int i = 0; i < 200; ++i) {
    prev = p.value();
    adamw_step(ps, gs, st, cfg);
  }
  const Mat step = (p.value() - prev).cwiseAbs();
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(step(0, j), cfg.learning_rate, 1e-3 * cfg.learning_rate);
}

TEST(AdamW, DecayShrinksNorm) {
  Tensor p(Mat::Constant(2, 3, 1.5), true);
  std::vector<Tensor> ps{p};
  std::vector<Mat> gs{Mat::Zero(2, 3)};
  AdamState st;
  OptimizerConfig cfg;
  cfg.weight_decay = 0.1;
  double prev = p.value().norm();
  for (int i = 0; i < 3; ++i) {
    adamw_step(ps, gs, st, cfg);
    EXPECT_LT(p.value().norm(), prev);
    prev = p.value().norm();
  }
}

TEST(AdamW, ClipGradNorm) {
  Tensor p(Mat::Zero(1, 2), true);
  p.node()->grad = Mat{{3.0, 4.0}};
  AdamW opt({p}, {});
  EXPECT_DOUBLE_EQ(opt.clip_grad_norm(1.0), 5.0);
  EXPECT_NEAR(p.grad().norm(), 1.0, 1e-12);
}

TEST(LayerNormOp, NormalizesRows) {
  std::mt19937_64 rng(6);
  const Tensor x(support::random_mat(4, 10, rng, 30.0));
  const Tensor y = layer_norm(x, Tensor(Mat::Ones(1, 10)), Tensor(Mat::Zero(1, 10)));
  for (int r = 0; r < 4; ++r) {
    const auto row = y.value().row(r);
    EXPECT_NEAR(row.mean(), 0.0, 1e-6);
    EXPECT_NEAR((row.array() - row.mean()).square().mean(), 1.0, 1e-6);
  }
}

TEST(Transformer, FiniteForLargeInputs) {
  std::mt19937_64 rng(7);
  Transformer t(TransformerConfig{2, 16, 4, true, 0.0}, true, rng);
  const Tensor x(support::random_mat(6, 16, rng, 1e3)), mem(support::random_mat(3, 16, rng, 1e3));
  EXPECT_TRUE(t.forward(x, &mem, Context{}).value().allFinite());
}

TEST(Transformer, CausalOutputIgnoresFuture) {
  std::mt19937_64 rng(8);
  Transformer t(TransformerConfig{2, 8, 2, true, 0.0}, false, rng);
  Mat x = support::random_mat(5, 8, rng);
  const Mat a = t.forward(Tensor(x), nullptr, Context{}).value();
  x.row(4) = support::random_mat(1, 8, rng);
  const Mat b = t.forward(Tensor(x), nullptr, Context{}).value();
  EXPECT_LT((a.topRows(4) - b.topRows(4)).norm(), 1e-12);
}

TEST(Sinusoid, KnownValues) {
  const double pos[] = {0.0, 1.0};
  const Mat e = sinusoidal_encoding(pos, 4);
  EXPECT_DOUBLE_EQ(e(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(e(0, 1), 1.0);
  EXPECT_NEAR(e(1, 0), std::sin(1.0), 1e-15);
  EXPECT_NEAR(e(1, 1), std::cos(1.0), 1e-15);
  EXPECT_NEAR(e(1, 2), std::sin(1.0 / 100.0), 1e-15);
}

TEST(Dropout, IdentityAtZeroAndUnbiased) {
  std::mt19937_64 rng(9);
  const Tensor x(Mat::Ones(200, 50));
  EXPECT_EQ(dropout(x, 0.0, rng).value(), x.value());
  EXPECT_NEAR(dropout(x, 0.3, rng).value().mean(), 1.0, 0.02);
}
