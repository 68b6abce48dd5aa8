#include <gtest/gtest.h>

#include "contracts.h"
#include "dsvqa/fusion.h"

using namespace dsvqa;
using V = Var<double>;

namespace {

V rows(std::vector<double> v, std::size_t b) {
  const std::size_t d = v.size() / b;
  return V::constant(Tensor<double>({b, d}, std::move(v)));
}

}  // namespace

TEST(FusionWeights, HandExamples) {
  const auto w = fusion_weights({1, 0}, {0, 1}, {-1, 0}, {1, 0});
  EXPECT_DOUBLE_EQ(w.bvfe, 1.0);
  EXPECT_DOUBLE_EQ(w.tcm, 0.0);
  EXPECT_DOUBLE_EQ(w.vbtc, -1.0);
  const auto d = fusion_weights({1, 1}, {3, 0}, {2, 2}, {1, 1});
  EXPECT_NEAR(d.tcm, 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(d.bvfe, 1.0, 1e-15);
}

TEST(FusionWeights, ZeroGuideIsAnError) {
  EXPECT_THROW(fusion_weights({1, 0}, {0, 1}, {1, 1}, {0, 0}), NumericError);
}

TEST(FusionWeights, Contracts) {
  const auto r = contracts::fusion_contracts(11);
  EXPECT_TRUE(r.ok) << r.detail;
}

TEST(Fuse, WeightedSumExample) {
  auto out = fuse<double>({rows({1, 2}, 1), rows({10, 20}, 1)}, rows({0.5, -1}, 1)).value();
  EXPECT_EQ(out.vec(), (std::vector<double>{-9.5, -19}));
  EXPECT_THROW(fuse<double>({rows({1, 2}, 1)}, rows({0.5, -1}, 1)), ShapeError);
  EXPECT_THROW(fuse<double>({}, rows({1}, 1)), Error);
}

TEST(Fuse, AddBaselineIsUnitWeights) {
  std::mt19937_64 g(1);
  std::vector<V> f;
  for (int k = 0; k < 3; ++k) f.push_back(V::constant(oracle::random_tensor({2, 5}, g)));
  const auto a = fuse_add(f).value();
  const auto b = fuse(f, V::constant(Tensor<double>::full({2, 3}, 1.0))).value();
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(ConcatFusion, EqualsBlockwiseProjection) {
  Rng rng(2);
  ConcatFusion<double> cf(2, 3, rng);
  std::mt19937_64 g(3);
  auto a = oracle::random_tensor({2, 3}, g), b = oracle::random_tensor({2, 3}, g);
  const auto y = cf.forward({V::constant(a), V::constant(b)}).value();
  ASSERT_EQ(y.shape(), (Shape{2, 3}));
  const auto& w = cf.proj.weight.value();  // 6 x 3
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t j = 0; j < 3; ++j) {
      long double s = cf.proj.bias.value()[j];
      for (std::size_t i = 0; i < 3; ++i) s += a[n * 3 + i] * w[i * 3 + j] + b[n * 3 + i] * w[(3 + i) * 3 + j];
      EXPECT_NEAR(y[n * 3 + j], static_cast<double>(s), 1e-12);
    }
}

TEST(TextAdapter, ResidualBlendAndShapes) {
  Rng rng(4);
  TextAdapter<double> adapter(8, 0.4, rng);
  std::mt19937_64 g(5);
  auto t = oracle::random_tensor({8}, g);
  EXPECT_EQ(adapter.forward(V::constant(t)).shape(), (Shape{8}));
  EXPECT_EQ(adapter.forward(V::constant(oracle::random_tensor({3, 8}, g))).shape(), (Shape{3, 8}));

  StateList<double> s;
  adapter.collect("text", s);
  for (auto& [name, p] : s.params) p->value().fill(0.0);
  const auto y = adapter.forward(V::constant(t)).value();
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(y[i], 0.6 * t[i], 1e-15);

  adapter.beta = 0.0;
  EXPECT_EQ(adapter.forward(V::constant(t)).value(), t);
  EXPECT_THROW(TextAdapter<double>(6, 0.4, rng), Error);
  EXPECT_THROW(TextAdapter<double>(8, 1.5, rng), Error);
}

TEST(FusionMode, ParseRoundTrip) {
  for (auto m : {FusionMode::kTextGuided, FusionMode::kConcat, FusionMode::kAdd}) {
    EXPECT_EQ(parse_fusion_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_fusion_mode("attention"), Error);
}
