#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "msfmamba/gradcheck.hpp"
#include "msfmamba/ops.hpp"
#include "msfmamba/rng.hpp"

using namespace msf;
using TD = Tensor<double>;
using VD = Var<double>;

namespace {

VD c(TD t) { return VD::constant(std::move(t)); }

void expect_near(const TD& got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "at " << i;
}

}  // namespace

TEST(Tensor, RejectsZeroDimsAndBadData) {
  EXPECT_THROW(TD(Shape{2, 0}), DimensionError);
  EXPECT_THROW(TD(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(TD(Shape{2, 3}).reshaped(Shape{4}), DimensionError);
}

TEST(Tensor, RowMajorLayout) {
  TD t(Shape{2, 3, 4});
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<double>(k);
  EXPECT_EQ(t.at(1, 2, 3), 23.0);
  EXPECT_EQ(t.at(0, 1, 0), 4.0);
}

TEST(Linear, Examples) {
  expect_near(linear(c(TD::vector({1, 2})), c(TD::matrix({{1, 0}, {0, 1}})), c(TD::vector({0, 0}))).value(), {1, 2},
              0);
  expect_near(linear(c(TD::vector({1, 2})), c(TD::matrix({{3}, {4}})), c(TD::vector({5}))).value(), {16}, 0);
  expect_near(linear(c(TD::vector({0, 0})), c(TD::matrix({{2, 9}, {-3, 4}})), c(TD::vector({7, -1}))).value(),
              {7, -1}, 0);
}

TEST(Linear, ShapeMismatch) {
  EXPECT_THROW(linear(c(TD::vector({1, 2, 3})), c(TD::matrix({{1}, {2}}))), DimensionError);
  EXPECT_THROW(linear(c(TD::vector({1, 2})), c(TD::matrix({{1}, {2}})), c(TD::vector({1, 2}))), DimensionError);
}

TEST(Linear, ExactlyAdditive) {
  Rng rng(7);
  const auto a = rng.normal_tensor<double>(Shape{5, 4});
  const auto b = rng.normal_tensor<double>(Shape{5, 4});
  const auto W = c(rng.normal_tensor<double>(Shape{4, 3}));
  const auto bias = c(rng.normal_tensor<double>(Shape{3}));
  const auto lhs = linear(add(c(a), c(b)), W, bias);
  const auto rhs = add(linear(c(a), W, bias), linear(c(b), W, bias));
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(lhs.value().at(r, k), rhs.value().at(r, k) - bias.value()[k], 1e-12);
    }
  }
}

TEST(DepthwiseConv, DeltaKernelOnOnes) {
  TD k(Shape{3, 3, 1}, 0.0);
  k.at(1, 1, 0) = 1.0;
  const auto out = depthwise_conv2d(c(TD(Shape{3, 3, 1}, 1.0)), c(k), 1);
  expect_near(out.value(), std::vector<double>(9, 1.0), 0);
}

TEST(DepthwiseConv, AllOnesKernelZeroPad) {
  const TD x(Shape{2, 2, 1}, std::vector<double>{1, 2, 3, 4});
  const auto out = depthwise_conv2d(c(x), c(TD(Shape{3, 3, 1}, 1.0)), 1);
  EXPECT_EQ(out.shape(), (Shape{2, 2, 1}));
  expect_near(out.value(), {10, 10, 10, 10}, 0);
}

TEST(DepthwiseConv, StrideTwoShapes) {
  Rng rng(1);
  const auto k = c(rng.normal_tensor<double>(Shape{3, 3, 2}));
  EXPECT_EQ(depthwise_conv2d(c(rng.normal_tensor<double>(Shape{4, 4, 2})), k, 2).shape(), (Shape{2, 2, 2}));
  EXPECT_EQ(depthwise_conv2d(c(rng.normal_tensor<double>(Shape{5, 3, 2})), k, 2).shape(), (Shape{3, 2, 2}));
  EXPECT_THROW(depthwise_conv2d(c(rng.normal_tensor<double>(Shape{4, 4, 2})), k, 3), ConfigError);
}

TEST(DepthwiseConv, DeltaKernelIsBitwiseIdentity) {
  Rng rng(2);
  const auto x = rng.normal_tensor<double>(Shape{5, 6, 3});
  TD k(Shape{3, 3, 3}, 0.0);
  for (std::size_t ch = 0; ch < 3; ++ch) k.at(1, 1, ch) = 1.0;
  EXPECT_TRUE(bitwise_equal(depthwise_conv2d(c(x), c(k), 1).value(), x));
}

TEST(DepthwiseConv, ChannelsIndependent) {
  Rng rng(3);
  auto x = rng.normal_tensor<double>(Shape{4, 4, 2});
  const auto k = c(rng.normal_tensor<double>(Shape{3, 3, 2}));
  const auto before = depthwise_conv2d(c(x), k, 1).value();
  for (std::size_t p = 0; p < 16; ++p) x[p * 2 + 1] += 5.0;
  const auto after = depthwise_conv2d(c(x), k, 1).value();
  for (std::size_t p = 0; p < 16; ++p) EXPECT_EQ(before[p * 2], after[p * 2]);
}

TEST(Silu, Examples) {
  const auto out = silu(c(TD::vector({0.0, 1.0, 40.0}))).value();
  EXPECT_EQ(out[0], 0.0);
  EXPECT_NEAR(out[1], 0.731059, 5e-7);
  EXPECT_NEAR(out[2], 40.0, 1e-12);
}

TEST(Softplus, Examples) {
  const auto out = softplus(c(TD::vector({0.0, -50.0, 100.0}))).value();
  EXPECT_NEAR(out[0], std::log(2.0), 1e-15);
  EXPECT_GT(out[1], 0.0);
  EXPECT_LT(out[1], 1e-20);
  const long double oracle = 100.0L + std::log1p(std::exp(-100.0L));
  EXPECT_NEAR(out[2], static_cast<double>(oracle), 1e-12);
}

TEST(Softplus, StrictlyPositiveAndFiniteAtExtremes) {
  const auto d = softplus(c(TD::vector({-1e4, 1e4, -745.0, -800.0}))).value();
  for (double v : d.data()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0);
  }
  EXPECT_EQ(d[1], 1e4);
  const auto f = softplus(Var<float>::constant(Tensor<float>::vector({-1e4f, 1e4f, -120.0f}))).value();
  for (float v : f.data()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0f);
  }
}

TEST(LayerNorm, Examples) {
  const auto g1 = c(TD(Shape{3}, 1.0)), b0 = c(TD(Shape{3}, 0.0));
  expect_near(layer_norm(c(TD::vector({1, 1, 1})), g1, b0).value(), {0, 0, 0}, 0);
  expect_near(layer_norm(c(TD::vector({-1, 1})), c(TD(Shape{2}, 1.0)), c(TD(Shape{2}, 0.0)), 1e-14).value(), {-1, 1},
              1e-12);
  expect_near(layer_norm(c(TD::vector({3, -8})), c(TD(Shape{2}, 0.0)), c(TD::vector({5, 5}))).value(), {5, 5}, 0);
}

TEST(LayerNorm, ChannelMismatch) {
  EXPECT_THROW(layer_norm(c(TD::vector({1, 2, 3})), c(TD(Shape{2}, 1.0)), c(TD(Shape{2}, 0.0))), DimensionError);
}

TEST(LayerNorm, NormalizesEachTrailingSlice) {
  Rng rng(4);
  const auto x = rng.normal_tensor<double>(Shape{3, 8}, 3.0);
  const auto y = layer_norm(c(x), c(TD(Shape{8}, 1.0)), c(TD(Shape{8}, 0.0)), 1e-12).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (std::size_t k = 0; k < 8; ++k) m += y.at(r, k) / 8;
    for (std::size_t k = 0; k < 8; ++k) v += (y.at(r, k) - m) * (y.at(r, k) - m) / 8;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-9);
  }
}

TEST(Interpolate, ConstantFieldPreserved) {
  for (auto mode : {InterpMode::Bilinear, InterpMode::Nearest}) {
    const auto out = interpolate_up2(c(TD(Shape{2, 2, 2}, 3.0)), 4, 4, mode).value();
    EXPECT_EQ(out.shape(), (Shape{4, 4, 2}));
    for (double v : out.data()) EXPECT_EQ(v, 3.0);
    const auto odd = interpolate_up2(c(TD(Shape{3, 2, 1}, -1.25)), 5, 4, mode).value();
    for (double v : odd.data()) EXPECT_EQ(v, -1.25);
  }
}

TEST(Interpolate, SameSizeIsIdentity) {
  Rng rng(5);
  const auto x = rng.normal_tensor<double>(Shape{3, 4, 2});
  EXPECT_TRUE(bitwise_equal(interpolate_up2(c(x), 3, 4).value(), x));
}

TEST(Interpolate, OneByTwoRampIsMonotone) {
  const auto out = interpolate_up2(c(TD(Shape{1, 2, 1}, std::vector<double>{0, 1})), 1, 4).value();
  // Half-pixel sample points -0.25, 0.25, 0.75, 1.25 clamped to [0, 1].
  expect_near(out, {0.0, 0.25, 0.75, 1.0}, 1e-15);
}

TEST(Interpolate, SmallerTargetRejected) {
  EXPECT_THROW(interpolate_up2(c(TD(Shape{4, 4, 1})), 3, 4), DimensionError);
}

TEST(Backward, SumSeedsOnes) {
  const auto x = VD::leaf(TD(Shape{2, 3}, 0.5));
  const auto g = backward(sum(x));
  expect_near(g.wrt(x), std::vector<double>(6, 1.0), 0);
}

TEST(Backward, ProductRule) {
  const auto x = VD::leaf(TD::scalar(3.0)), y = VD::leaf(TD::scalar(4.0));
  const auto g = backward(mul(x, y), TD::scalar(1.0));
  EXPECT_EQ(g.wrt(x)[0], 4.0);
  EXPECT_EQ(g.wrt(y)[0], 3.0);
}

TEST(Backward, SeedShapeMismatch) {
  const auto x = VD::leaf(TD(Shape{3}, 1.0));
  EXPECT_THROW(backward(silu(x), TD(Shape{2}, 1.0)), DimensionError);
  EXPECT_THROW(backward(silu(x)), DimensionError);
}

TEST(Backward, UnreachableLeafGetsZeros) {
  const auto x = VD::leaf(TD(Shape{2}, 1.0)), unused = VD::leaf(TD(Shape{4}, 2.0));
  const auto g = backward(sum(x));
  EXPECT_FALSE(g.reached(unused));
  expect_near(g.wrt(unused), {0, 0, 0, 0}, 0);
}

TEST(Backward, SharedNodeAccumulates) {
  // f = sum(x * x + x) => df/dx = 2x + 1, with x reached through three paths.
  const auto x = VD::leaf(TD::vector({1.5, -2.0}));
  const auto g = backward(sum(add(mul(x, x), x)));
  expect_near(g.wrt(x), {4.0, -3.0}, 0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  const auto x = VD::leaf(TD::vector({1, 2}));
  VD y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = silu(x);
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Ops, NonFiniteResultIsAnError) {
  const auto big = VD::constant(TD::vector({1e300}));
  EXPECT_THROW(mul(big, big), NumericError);
}

TEST(GradCheck, SiluPasses) {
  Rng rng(11);
  const auto r = grad_check([](const VD& x) { return sum(silu(x)); }, rng.normal_tensor<double>(Shape{6}));
  EXPECT_TRUE(r.passed) << describe(r);
}

TEST(GradCheck, LinearPassesAtTightTolerance) {
  Rng rng(12);
  const auto W = rng.normal_tensor<double>(Shape{4, 3});
  const auto r = grad_check([&](const std::vector<VD>& v) { return sum(linear(v[0], v[1])); },
                            {rng.normal_tensor<double>(Shape{2, 4}), W}, 1e-5, 1e-6);
  EXPECT_TRUE(r.passed) << describe(r);
}

TEST(GradCheck, CorruptedVjpFails) {
  // d(x^2)/dx reported as x instead of 2x.
  auto bad_square = [](const VD& x) {
    TD v = x.value();
    for (auto& e : v.data()) e *= e;
    return make_op<double>(
        std::move(v), {x},
        [](const Node<double>& self, const TD& cot) {
          TD g = self.parents[0]->value;
          for (std::size_t k = 0; k < g.size(); ++k) g[k] *= cot[k];
          return std::vector<TD>{g};
        },
        "bad_square");
  };
  const auto r = grad_check([&](const VD& x) { return sum(bad_square(x)); }, TD::vector({1.0, -2.0, 3.0}));
  EXPECT_FALSE(r.passed);
  EXPECT_GE(r.max_rel_error, 1e-4);
}

TEST(GradCheck, NonScalarRejected) {
  EXPECT_THROW(grad_check([](const VD& x) { return silu(x); }, TD::vector({1.0, 2.0})), DimensionError);
}

TEST(Rng, SeededStreamsRepeat) {
  Rng a(99), b(99), other(100);
  const auto ta = a.normal_tensor<double>(Shape{16});
  EXPECT_TRUE(bitwise_equal(ta, b.normal_tensor<double>(Shape{16})));
  EXPECT_FALSE(bitwise_equal(ta, other.normal_tensor<double>(Shape{16})));
}
