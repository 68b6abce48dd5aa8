#include <gtest/gtest.h>

#include <algorithm>

#include "dsvqa/vbtc.h"
#include "oracles.h"

using namespace dsvqa;
using V = Var<double>;

namespace {

void zero_params(VbtcHead<double>& head) {
  StateList<double> s;
  head.collect("vbtc", s);
  for (auto& [name, p] : s.params) {
    if (name.find(".weight") != std::string::npos || name.find(".bias") != std::string::npos) {
      p->value().fill(0.0);
    }
  }
}

}  // namespace

TEST(TemporalPool, HandExample) {
  auto frames = V::constant(Tensor<double>({3, 2}, {1, 2, 3, 4, 5, 9}));
  EXPECT_EQ(temporal_pool(frames).value().vec(), (std::vector<double>{3, 5}));
}

TEST(TemporalPool, MatchesLoopOracleOnAllLayouts) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t t = 1 + rng() % 8, d = 1 + rng() % 6, h = 1 + rng() % 3;
    auto x = oracle::random_tensor({t, d, h, h}, rng);
    auto y = temporal_pool(V::constant(x)).value();
    ASSERT_EQ(y.shape(), (Shape{d, h, h}));
    const std::size_t plane = d * h * h;
    for (std::size_t i = 0; i < plane; ++i) {
      long double s = 0;
      for (std::size_t f = 0; f < t; ++f) s += x[f * plane + i];
      EXPECT_NEAR(y[i], static_cast<double>(s / t), 1e-12);
    }
    auto batched = temporal_pool(V::constant(x.reshaped({1, t, d, h, h}))).value();
    EXPECT_EQ(batched.vec(), y.vec());
  }
}

TEST(TemporalPool, InvariantToFrameOrder) {
  std::mt19937_64 rng(2);
  auto x = oracle::random_tensor({6, 5}, rng);
  std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  Tensor<double> shuffled({6, 5});
  for (std::size_t f = 0; f < 6; ++f)
    for (std::size_t j = 0; j < 5; ++j) shuffled[f * 5 + j] = x[perm[f] * 5 + j];
  auto a = temporal_pool(V::constant(x)).value();
  auto b = temporal_pool(V::constant(shuffled)).value();
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(TemporalPool, RejectsBadRank) {
  EXPECT_THROW(temporal_pool(V::constant(Tensor<double>({4}))), ShapeError);
  EXPECT_THROW(temporal_pool(V::constant(Tensor<double>({2, 2, 2}))), ShapeError);
}

TEST(ResidualBlend, EndpointsAndDefault) {
  auto a = V::constant(Tensor<double>({2}, {1, 2}));
  auto o = V::constant(Tensor<double>({2}, {10, 20}));
  EXPECT_EQ(residual_blend(a, o, 0.0).value().vec(), (std::vector<double>{10, 20}));
  EXPECT_EQ(residual_blend(a, o, 1.0).value().vec(), (std::vector<double>{1, 2}));
  auto mid = residual_blend(a, o, 0.4).value();
  EXPECT_NEAR(mid[0], 0.4 * 1 + 0.6 * 10, 1e-12);
  EXPECT_NEAR(mid[1], 0.4 * 2 + 0.6 * 20, 1e-12);
}

TEST(ResidualBlend, LinearInAlpha) {
  std::mt19937_64 rng(3);
  auto a = V::constant(oracle::random_tensor({7}, rng));
  auto o = V::constant(oracle::random_tensor({7}, rng));
  for (double alpha : {0.1, 0.3, 0.55, 0.9}) {
    auto y = residual_blend(a, o, alpha).value();
    auto y0 = residual_blend(a, o, 0.0).value();
    auto y1 = residual_blend(a, o, 1.0).value();
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(y[i], (1 - alpha) * y0[i] + alpha * y1[i], 1e-12);
  }
}

TEST(ResidualBlend, Errors) {
  auto a = V::constant(Tensor<double>({2}));
  EXPECT_THROW(residual_blend(a, a, -0.1), Error);
  EXPECT_THROW(residual_blend(a, a, 1.5), Error);
  EXPECT_THROW(residual_blend(a, V::constant(Tensor<double>({3})), 0.5), ShapeError);
}

TEST(VbtcHead, OutputShape) {
  Rng rng(4);
  VbtcHead<double> head({8, 4, 0.4}, rng);
  std::mt19937_64 g(5);
  auto out = head.forward(V::constant(oracle::random_tensor({3, 5, 8, 2, 2}, g)), RunMode::train());
  EXPECT_EQ(out.shape(), (Shape{3, 8}));
}

TEST(VbtcHead, ZeroAdapterLeavesScaledPooledFeatures) {
  Rng rng(6);
  VbtcHead<double> head({8, 4, 0.4}, rng);
  zero_params(head);
  std::mt19937_64 g(7);
  auto x = oracle::random_tensor({3, 4, 8, 2, 2}, g);
  auto z = head.adapter(temporal_pool(V::constant(x)), RunMode::train()).value();
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  auto out = head.forward(V::constant(x), RunMode::train()).value();
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t d = 0; d < 8; ++d) {
      long double s = 0;
      for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t p = 0; p < 4; ++p) s += x[((b * 4 + t) * 8 + d) * 4 + p];
      EXPECT_NEAR(out[b * 8 + d], 0.6 * static_cast<double>(s / 16), 1e-12);
    }
}

TEST(VbtcHead, ConstructionErrors) {
  Rng rng(8);
  EXPECT_THROW(VbtcHead<double>({10, 4, 0.4}, rng), Error);
  EXPECT_THROW(VbtcHead<double>({8, 4, 1.2}, rng), Error);
  VbtcHead<double> head({8, 4, 0.4}, rng);
  EXPECT_THROW(head.forward(V::constant(Tensor<double>({2, 3, 8})), RunMode::train()), ShapeError);
  EXPECT_THROW(head.adapter(V::constant(Tensor<double>({2, 6, 1, 1})), RunMode::train()), ShapeError);
}
