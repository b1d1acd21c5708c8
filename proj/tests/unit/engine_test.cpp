#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pfesta/engine/kernels.hpp"
#include "pfesta/engine/ops.hpp"
#include "pfesta/engine/random.hpp"
#include "support/gradcheck.hpp"

namespace pfesta {
namespace {

using testing::gradient_check;
using testing::LossBuilder;
using testing::random_params;
using VD = BasicVar<double>;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Graph g;
  auto eye = g.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  auto m = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(ops::matmul(eye, m).value(), Tensor({2, 2}, {1, 2, 3, 4}));
}

TEST(Matmul, ZerosAnnihilate) {
  Graph g;
  Rng rng = make_stream(1, {});
  auto z = g.constant(Tensor({2, 3}));
  auto b = g.constant(uniform_tensor({3, 4}, -1, 1, rng));
  EXPECT_EQ(ops::matmul(z, b).value(), Tensor({2, 4}));
}

TEST(Matmul, HandExpandedProduct) {
  Graph g;
  auto a = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  auto b = g.constant(Tensor({2, 1}, {5, 6}));
  EXPECT_EQ(ops::matmul(a, b).value(), Tensor({2, 1}, {17, 39}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Graph g;
  auto a = g.constant(Tensor({2, 3}));
  auto b = g.constant(Tensor({4, 5}));
  try {
    ops::matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
}

TEST(Matmul, AssociativeOnRandomChains) {
  Rng rng = make_stream(7, {});
  for (int trial = 0; trial < 20; ++trial) {
    Graph g;
    auto a = g.constant(uniform_tensor({8, 8}, -1, 1, rng));
    auto b = g.constant(uniform_tensor({8, 8}, -1, 1, rng));
    auto c = g.constant(uniform_tensor({8, 8}, -1, 1, rng));
    const auto left = ops::matmul(ops::matmul(a, b), c).value();
    const auto right = ops::matmul(a, ops::matmul(b, c)).value();
    // Relative to the magnitude of the chain, not per element (entries can cancel to ~0).
    double scale = 0;
    for (float v : left.data()) scale = std::max(scale, std::abs(static_cast<double>(v)));
    EXPECT_LT(max_abs_difference(left, right) / scale, 1e-5);
  }
}

TEST(Softmax, UniformInput) {
  Graph g;
  auto y = ops::softmax(g.constant(Tensor({3}, {0, 0, 0})), 0).value();
  for (float v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
}

TEST(Softmax, ShiftInvariantForLargeConstant) {
  Graph g;
  auto y = ops::softmax(g.constant(Tensor({3}, {1000, 1000, 1000})), 0).value();
  for (float v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
}

TEST(Softmax, ExponentialsOfLogs) {
  Graph g;
  auto y = ops::softmax(g.constant(Tensor({3}, {std::log(1.0f), std::log(2.0f), std::log(3.0f)})), 0).value();
  EXPECT_NEAR(y[0], 1.0 / 6.0, 1e-6);
  EXPECT_NEAR(y[1], 2.0 / 6.0, 1e-6);
  EXPECT_NEAR(y[2], 3.0 / 6.0, 1e-6);
}

TEST(Softmax, RowsSumToOneAndIgnoreShifts) {
  Rng rng = make_stream(11, {});
  std::uniform_real_distribution<float> shift(-50, 50);
  for (int trial = 0; trial < 100; ++trial) {
    Graph g;
    Tensor x = uniform_tensor({4, 9}, -5, 5, rng);
    Tensor shifted = x;
    for (std::size_t r = 0; r < 4; ++r) {
      const float c = shift(rng);
      for (std::size_t j = 0; j < 9; ++j) shifted.at(r, j) += c;
    }
    const auto y = ops::softmax(g.constant(x), 1).value();
    const auto ys = ops::softmax(g.constant(shifted), 1).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0;
      for (std::size_t j = 0; j < 9; ++j) total += y.at(r, j);
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
    EXPECT_LT(max_abs_difference(y, ys), 1e-6);
  }
}

TEST(Softmax, RejectsBadAxis) {
  Graph g;
  EXPECT_THROW(ops::softmax(g.constant(Tensor({2, 2})), 2), DimensionError);
}

TEST(LayerNorm, ConstantRowBecomesZero) {
  Graph g;
  auto y = ops::layer_norm(g.constant(Tensor({1, 4}, 3.0f)), g.constant(Tensor({4}, 1.0f)), g.constant(Tensor({4})),
                           1e-5f)
               .value();
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(LayerNorm, NormalizedRowIsFixedPoint) {
  Graph g;
  auto y = ops::layer_norm(g.constant(Tensor({1, 2}, {1, -1})), g.constant(Tensor({2}, 1.0f)),
                           g.constant(Tensor({2})), 0.0f)
               .value();
  EXPECT_FLOAT_EQ(y[0], 1.0f);
  EXPECT_FLOAT_EQ(y[1], -1.0f);
}

TEST(LayerNorm, AffineHandComputation) {
  Graph g;
  auto y = ops::layer_norm(g.constant(Tensor({1, 2}, {0, 2})), g.constant(Tensor({2}, 2.0f)),
                           g.constant(Tensor({2}, 1.0f)), 0.0f)
               .value();
  EXPECT_FLOAT_EQ(y[0], -1.0f);
  EXPECT_FLOAT_EQ(y[1], 3.0f);
}

TEST(Backward, LinearMapGradientIsInput) {
  Graph g;
  Tensor x({3, 1}, {0.5f, -2.0f, 4.0f});
  auto w = g.leaf("w", Tensor({2, 3}, 1.0f), true);
  auto loss = ops::sum(ops::matmul(w, g.constant(x)));
  const auto grads = g.backward(loss);
  ASSERT_TRUE(grads.contains("w"));
  EXPECT_EQ(grads.at("w"), Tensor({2, 3}, {0.5f, -2.0f, 4.0f, 0.5f, -2.0f, 4.0f}));
}

TEST(Backward, IndependentLeafHasNoGradient) {
  Graph g;
  auto w = g.leaf("w", Tensor({2}, 1.0f), true);
  g.leaf("unused", Tensor({2}, 1.0f), true);
  const auto grads = g.backward(ops::sum(w));
  EXPECT_TRUE(grads.contains("w"));
  EXPECT_FALSE(grads.contains("unused"));
}

TEST(Backward, FrozenLeafReceivesNothing) {
  Graph g;
  auto w = g.leaf("w", Tensor({2}, 1.0f), true);
  auto f = g.leaf("frozen", Tensor({2}, 2.0f), false);
  const auto grads = g.backward(ops::sum(ops::mul(w, f)));
  EXPECT_EQ(grads.size(), 1u);
  EXPECT_EQ(grads.at("w"), Tensor({2}, 2.0f));
}

TEST(Backward, RejectsNonScalarLoss) {
  Graph g;
  auto w = g.leaf("w", Tensor({2}, 1.0f), true);
  EXPECT_THROW(g.backward(w), ContractError);
}

TEST(Backward, TwoLayerNetMatchesFiniteDifferences) {
  Rng rng = make_stream(3, {});
  auto params = random_params({{"w1", {5, 7}}, {"b1", {7}}, {"w2", {7, 3}}, {"b2", {3}}}, rng);
  Rng xr = make_stream(4, {});
  const auto x = uniform_tensor({4, 5}, -1, 1, xr).cast<double>();
  LossBuilder build = [&](BasicGraph<double>& g, const model::VarMap<double>& p) {
    auto h = ops::gelu(ops::add(ops::matmul(g.constant(x), p.at("w1")), p.at("b1")));
    auto out = ops::add(ops::matmul(h, p.at("w2")), p.at("b2"));
    return ops::mean(ops::mul(out, out));
  };
  const auto r = gradient_check(params, build, 100, rng);
  EXPECT_LT(r.worst, 1e-4) << r.worst_where;
}

// Each differentiable op against central differences, through a random linear
// readout so no gradient is trivially uniform.
class OpGradient : public ::testing::Test {
 protected:
  void check(const std::vector<std::pair<std::string, Shape>>& layout,
             const std::function<VD(BasicGraph<double>&, const model::VarMap<double>&)>& op) {
    Rng rng = make_stream(99, {layout.size()});
    auto params = random_params(layout, rng);
    BasicGraph<double> probe;
    const Shape out_shape = op(probe, model::bind(probe, params, "", false)).shape();
    BasicTensor<double> readout(out_shape);
    std::uniform_real_distribution<double> dist(-1, 1);
    for (auto& v : readout.data()) v = dist(rng);
    LossBuilder build = [&](BasicGraph<double>& g, const model::VarMap<double>& p) {
      return ops::sum(ops::mul(op(g, p), g.constant(readout)));
    };
    const auto r = gradient_check(params, build, 100, rng);
    EXPECT_LT(r.worst, 1e-4) << r.worst_where;
  }
};

TEST_F(OpGradient, Matmul) {
  check({{"a", {3, 4}}, {"b", {4, 5}}}, [](auto&, const auto& p) { return ops::matmul(p.at("a"), p.at("b")); });
}
TEST_F(OpGradient, AddSubMulWithBroadcast) {
  check({{"a", {3, 4}}, {"b", {4}}, {"c", {3, 4}}}, [](auto&, const auto& p) {
    return ops::mul(ops::sub(ops::add(p.at("a"), p.at("b")), p.at("c")), ops::mul(p.at("c"), p.at("b")));
  });
}
TEST_F(OpGradient, Softmax) {
  check({{"x", {3, 5}}}, [](auto&, const auto& p) { return ops::softmax(ops::scale(p.at("x"), 3.0), 1); });
  check({{"x", {3, 5}}}, [](auto&, const auto& p) { return ops::softmax(p.at("x"), 0); });
}
TEST_F(OpGradient, LayerNorm) {
  check({{"x", {3, 6}}, {"g", {6}}, {"b", {6}}},
        [](auto&, const auto& p) { return ops::layer_norm(p.at("x"), p.at("g"), p.at("b"), 1e-5); });
}
TEST_F(OpGradient, Activations) {
  check({{"x", {4, 4}}}, [](auto&, const auto& p) { return ops::gelu(ops::scale(p.at("x"), 2.0)); });
  check({{"x", {4, 4}}}, [](auto&, const auto& p) { return ops::sigmoid(ops::scale(p.at("x"), 3.0)); });
  check({{"x", {4, 4}}}, [](auto&, const auto& p) { return ops::relu(p.at("x")); });
}
TEST_F(OpGradient, ShapeOps) {
  check({{"x", {3, 4}}}, [](auto&, const auto& p) { return ops::transpose(ops::reshape(p.at("x"), Shape{4, 3})); });
  check({{"x", {5, 4}}}, [](auto&, const auto& p) { return ops::mean_rows(p.at("x")); });
  check({{"x", {5, 4}}, {"y", {2, 4}}}, [](auto&, const auto& p) {
    return ops::concat_rows<double>({ops::slice_rows(p.at("x"), 1, 4), p.at("y")});
  });
  check({{"x", {3, 5}}, {"y", {3, 2}}}, [](auto&, const auto& p) {
    return ops::concat_cols<double>({p.at("y"), ops::slice_cols(p.at("x"), 2, 5)});
  });
  check({{"x", {4, 3}}}, [](auto&, const auto& p) { return ops::gather_rows(p.at("x"), {2, 0, 3, 1}); });
}
TEST_F(OpGradient, Reductions) {
  check({{"x", {3, 4}}}, [](auto&, const auto& p) { return ops::mean(ops::mul(p.at("x"), p.at("x"))); });
}
TEST_F(OpGradient, Conv2dStridedPadded) {
  check({{"x", {2, 7, 7}}, {"w", {3, 2, 3, 3}}, {"b", {3}}},
        [](auto&, const auto& p) { return ops::conv2d(p.at("x"), p.at("w"), p.at("b"), 2, 1); });
  check({{"x", {2, 5, 5}}, {"w", {2, 2, 3, 3}}, {"b", {2}}},
        [](auto&, const auto& p) { return ops::conv2d(p.at("x"), p.at("w"), p.at("b"), 1, 1); });
}
TEST_F(OpGradient, UpsampleNearest) {
  check({{"x", {2, 3, 3}}}, [](auto&, const auto& p) { return ops::upsample_nearest(p.at("x"), 2); });
}

TEST(LossGradient, BceDiceFocal) {
  Rng rng = make_stream(5, {});
  auto params = random_params({{"z", {3, 4}}}, rng, -3, 3);
  BasicTensor<double> target({3, 4});
  std::bernoulli_distribution coin(0.5);
  for (auto& v : target.data()) v = coin(rng) ? 1.0 : 0.0;
  target[0] = 0.3;  // soft target
  for (auto loss : {0, 1, 2}) {
    LossBuilder build = [&](BasicGraph<double>&, const model::VarMap<double>& p) {
      if (loss == 0) return ops::bce_with_logits(p.at("z"), target);
      if (loss == 1) return ops::dice_loss(p.at("z"), target);
      return ops::focal_loss(p.at("z"), target);
    };
    const auto r = gradient_check(params, build, 100, rng);
    EXPECT_LT(r.worst, 1e-4) << "loss " << loss << ": " << r.worst_where;
  }
}

TEST(Losses, BceMatchesClosedForm) {
  Graph g;
  auto z = g.constant(Tensor({2}, {0.0f, 2.0f}));
  const float v = ops::bce_with_logits(z, Tensor({2}, {1.0f, 0.0f})).value().item();
  const double expected = (std::log(2.0) + std::log1p(std::exp(2.0))) / 2.0;
  EXPECT_NEAR(v, expected, 1e-6);
}

TEST(Losses, DiceOfPerfectLargeLogitsIsZero) {
  Graph g;
  auto z = g.constant(Tensor({4}, {40, 40, -40, -40}));
  EXPECT_NEAR(ops::dice_loss(z, Tensor({4}, {1, 1, 0, 0}), 0.0f).value().item(), 0.0, 1e-6);
}

TEST(Kernels, ParallelMatchesSerialBitwise) {
  Rng rng = make_stream(21, {});
  const std::size_t m = 37, k = 53, n = 29;
  const auto a = uniform_tensor({m, k}, -1, 1, rng);
  const auto b = uniform_tensor({k, n}, -1, 1, rng);
  const auto gm = uniform_tensor({m, n}, -1, 1, rng);
  Tensor c1({m, n}), c2({m, n});
  kernels::serial::gemm_nn<float>(a.data(), b.data(), c1.data(), m, k, n);
  kernels::parallel::gemm_nn<float>(a.data(), b.data(), c2.data(), m, k, n);
  EXPECT_EQ(c1, c2);
  Tensor d1({m, k}), d2({m, k});
  kernels::serial::gemm_nt<float>(gm.data(), b.data(), d1.data(), m, k, n);
  kernels::parallel::gemm_nt<float>(gm.data(), b.data(), d2.data(), m, k, n);
  EXPECT_EQ(d1, d2);
  Tensor e1({k, n}), e2({k, n});
  kernels::serial::gemm_tn<float>(a.data(), gm.data(), e1.data(), m, k, n);
  kernels::parallel::gemm_tn<float>(a.data(), gm.data(), e2.data(), m, k, n);
  EXPECT_EQ(e1, e2);

  const kernels::Conv2dGeometry geo{3, 17, 15, 5, 3, 2, 1};
  const auto x = uniform_tensor({3, 17, 15}, -1, 1, rng);
  const auto w = uniform_tensor({5, 3, 3, 3}, -1, 1, rng);
  const auto bias = uniform_tensor({5}, -1, 1, rng);
  Tensor y1({5, geo.out_h(), geo.out_w()}), y2 = y1;
  kernels::serial::conv2d_forward<float>(geo, x.data(), w.data(), bias.data(), y1.data());
  kernels::parallel::conv2d_forward<float>(geo, x.data(), w.data(), bias.data(), y2.data());
  EXPECT_EQ(y1, y2);
  const auto go = uniform_tensor(y1.shape(), -1, 1, rng);
  Tensor gw1(w.shape()), gw2(w.shape()), gb1({5}), gb2({5});
  kernels::serial::conv2d_backward_weight<float>(geo, x.data(), go.data(), gw1.data(), gb1.data());
  kernels::parallel::conv2d_backward_weight<float>(geo, x.data(), go.data(), gw2.data(), gb2.data());
  EXPECT_EQ(gw1, gw2);
  EXPECT_EQ(gb1, gb2);
  Tensor gx1(x.shape()), gx2(x.shape());
  kernels::serial::conv2d_backward_input<float>(geo, w.data(), go.data(), gx1.data());
  kernels::parallel::conv2d_backward_input<float>(geo, w.data(), go.data(), gx2.data());
  EXPECT_EQ(gx1, gx2);
}

TEST(Tensor, RejectsInconsistentData) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor(Shape{0, 2}), DimensionError);
}

TEST(Ops, OutputsStayFiniteOnFiniteInputs) {
  Rng rng = make_stream(8, {});
  Graph g;
  auto x = g.constant(uniform_tensor({4, 6}, -30, 30, rng));
  auto gm = g.constant(Tensor({6}, 1.0f));
  auto bt = g.constant(Tensor({6}));
  EXPECT_TRUE(all_finite(ops::softmax(x, 1).value()));
  EXPECT_TRUE(all_finite(ops::layer_norm(x, gm, bt, 1e-5f).value()));
  EXPECT_TRUE(all_finite(ops::sigmoid(x).value()));
  EXPECT_TRUE(all_finite(ops::gelu(x).value()));
  EXPECT_TRUE(all_finite(ops::bce_with_logits(x, Tensor({4, 6}, 1.0f)).value()));
  EXPECT_TRUE(all_finite(ops::focal_loss(x, Tensor({4, 6}, 0.0f)).value()));
}

}  // namespace
}  // namespace pfesta
