#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "dsvqa/grad_check.h"
#include "dsvqa/layers.h"
#include "oracles.h"

using namespace dsvqa;
using V = Var<double>;

namespace {

V constant(std::vector<double> data, Shape shape) {
  return V::constant(Tensor<double>(std::move(shape), std::move(data)));
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> bias_of(const Tensor<double>& b) { return {b.data().begin(), b.data().end()}; }

}  // namespace

TEST(Tensor, ShapeAndDataAgree) {
  EXPECT_THROW(Tensor<double>({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor<double> s;
  EXPECT_EQ(s.numel(), 1u);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(shape_str({3, 4}), "[3x4]");
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  std::mt19937_64 rng(1);
  auto a = oracle::random_tensor({3, 4}, rng);
  auto eye = Tensor<double>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto out = matmul(V::constant(eye), V::constant(a)).value();
  EXPECT_EQ(out, a);
}

TEST(Matmul, HandComputedProduct) {
  auto out = matmul(constant({1, 2, 3, 4}, {2, 2}), constant({0, 1}, {2, 1})).value();
  EXPECT_EQ(out.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(out[0], 2.0);
  EXPECT_DOUBLE_EQ(out[1], 4.0);
}

TEST(Matmul, RandomMatchesTripleLoopOracle) {
  std::mt19937_64 rng(2);
  auto a = oracle::random_tensor({5, 7}, rng);
  auto b = oracle::random_tensor({7, 3}, rng);
  EXPECT_LT(max_abs_diff(matmul(V::constant(a), V::constant(b)).value(), oracle::matmul(a, b)), 1e-12);
  EXPECT_THROW(matmul(V::constant(a), V::constant(a)), ShapeError);
}

TEST(Conv2d, OneByOneIdentityKernel) {
  std::mt19937_64 rng(3);
  auto x = oracle::random_tensor({3, 5, 5}, rng);
  Tensor<double> w({3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  auto y = conv2d(V::constant(x), V::constant(w), V(), {1, 1}, {0, 0}).value();
  EXPECT_EQ(y, x);
}

TEST(Conv2d, OnesKernelOnOnesInput) {
  auto y = conv2d(V::constant(Tensor<double>::full({1, 3, 3}, 1.0)),
                  V::constant(Tensor<double>::full({1, 1, 3, 3}, 1.0)), V(), {1, 1}, {0, 0})
               .value();
  ASSERT_EQ(y.numel(), 1u);
  EXPECT_DOUBLE_EQ(y[0], 9.0);
}

TEST(Conv2d, RandomMatchesNestedLoopOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = 1 + rng() % 4, o = 1 + rng() % 4, h = 5 + rng() % 8, k = 1 + 2 * (rng() % 2);
    const std::size_t stride = 1 + rng() % 2, pad = rng() % 2;
    auto x = oracle::random_tensor({2, c, h, h}, rng);
    auto w = oracle::random_tensor({o, c, k, k}, rng);
    auto b = oracle::random_tensor({o}, rng);
    auto y = conv2d(V::constant(x), V::constant(w), V::constant(b), {stride, stride}, {pad, pad}).value();
    auto ref = oracle::conv3d(x.reshaped({2, c, 1, h, h}), w.reshaped({o, c, 1, k, k}), bias_of(b),
                              {1, stride, stride}, {0, pad, pad});
    EXPECT_LT(max_abs_diff(y, ref.reshaped(y.shape())), 1e-6);
  }
}

TEST(Conv3d, RandomMatchesNestedLoopOracleUpToC4T6H12) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t c = 1 + rng() % 4, o = 1 + rng() % 4;
    const std::size_t t = 2 + rng() % 5, h = 4 + rng() % 9;
    ConvSpec spec;
    spec.stride = {1, 1 + rng() % 2, 1 + rng() % 2};
    spec.pad = {1, rng() % 2, 1};
    auto x = oracle::random_tensor({2, c, t, h, h}, rng);
    auto w = oracle::random_tensor({o, c, 3, 3, 3}, rng);
    auto b = oracle::random_tensor({o}, rng);
    auto y = conv3d(V::constant(x), V::constant(w), V::constant(b), spec).value();
    auto ref = oracle::conv3d(x, w, bias_of(b), spec.stride, spec.pad);
    EXPECT_LT(max_abs_diff(y, ref), 1e-6);
  }
}

TEST(Conv3d, IdentityKernelReturnsInput) {
  std::mt19937_64 rng(6);
  auto x = oracle::random_tensor({1, 2, 3, 4, 4}, rng);
  Tensor<double> w({2, 2, 1, 1, 1});
  w[0] = w[3] = 1.0;
  EXPECT_EQ(conv3d(V::constant(x), V::constant(w), V(), ConvSpec{}).value(), x);
}

TEST(Conv1d, IdentityAveragingAndOracle) {
  std::mt19937_64 rng(7);
  auto x = oracle::random_tensor({2, 6}, rng);
  Tensor<double> eye({2, 2, 3});
  eye[0 * 6 + 0 * 3 + 1] = 1.0;
  eye[1 * 6 + 1 * 3 + 1] = 1.0;
  EXPECT_EQ(conv1d(V::constant(x), V::constant(eye), V(), 1).value(), x);

  auto avg = conv1d(V::constant(Tensor<double>({1, 4}, {1, 2, 3, 4})),
                    V::constant(Tensor<double>::full({1, 1, 2}, 0.5)), V(), 0)
                 .value();
  EXPECT_EQ(avg.vec(), (std::vector<double>{1.5, 2.5, 3.5}));

  auto w = oracle::random_tensor({3, 2, 3}, rng);
  auto y = conv1d(V::constant(x), V::constant(w), V(), 1).value();
  auto ref = oracle::conv3d(x.reshaped({1, 2, 1, 1, 6}), w.reshaped({3, 2, 1, 1, 3}), {}, {1, 1, 1},
                            {0, 0, 1});
  EXPECT_LT(max_abs_diff(y, ref.reshaped(y.shape())), 1e-12);
}

TEST(BatchNorm, ConstantInputGivesZeros) {
  auto y = batch_norm<double>(V::constant(Tensor<double>::full({4, 2, 3}, 7.0)),
                              V::constant(Tensor<double>::full({2}, 1.0)), V::constant(Tensor<double>({2})),
                              nullptr, true, 0.1, 1e-5)
               .value();
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, PlusMinusOneStaysPlusMinusOne) {
  auto y = batch_norm<double>(constant({-1, 1, 1, -1}, {2, 2}), V::constant(Tensor<double>::full({2}, 1.0)),
                              V::constant(Tensor<double>({2})), nullptr, true, 0.1, 1e-5)
               .value();
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y[0], -expect, 1e-12);
  EXPECT_NEAR(y[1], expect, 1e-12);
  EXPECT_NEAR(y[2], expect, 1e-12);
  EXPECT_NEAR(y[3], -expect, 1e-12);
}

TEST(BatchNorm, RandomBatchIsStandardized) {
  std::mt19937_64 rng(8);
  auto x = oracle::random_tensor({16, 3, 5}, rng, 4.0);
  for (auto& v : x.data()) v += 3.0;
  auto y = batch_norm<double>(V::constant(x), V::constant(Tensor<double>::full({3}, 1.0)),
                              V::constant(Tensor<double>({3})), nullptr, true, 0.1, 1e-5)
               .value();
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, sq = 0;
    for (std::size_t n = 0; n < 16; ++n)
      for (std::size_t l = 0; l < 5; ++l) {
        const double v = y[(n * 3 + c) * 5 + l];
        s += v;
        sq += v * v;
      }
    EXPECT_LT(std::abs(s / 80), 1e-6);
    EXPECT_LT(std::abs(sq / 80 - 1.0), 1e-4);
  }
}

TEST(BatchNorm, DegenerateAxisInTrainingModeThrows) {
  EXPECT_THROW(batch_norm<double>(constant({1, 2}, {1, 2}), V::constant(Tensor<double>::full({2}, 1.0)),
                                  V::constant(Tensor<double>({2})), nullptr, true, 0.1, 1e-5),
               Error);
}

TEST(BatchNorm, RunningStatisticsDriveEvalMode) {
  BatchNorm<double> bn(1);
  auto x = constant({1, 3}, {2, 1});
  bn.forward(x, RunMode::train());
  // momentum 0.1: mean 0 -> 0.2, unbiased variance 2 -> var 1 -> 1.1
  EXPECT_NEAR(bn.state.running_mean[0], 0.2, 1e-12);
  EXPECT_NEAR(bn.state.running_var[0], 1.1, 1e-12);
  auto y = bn.forward(constant({0.2}, {1, 1}), RunMode::eval()).value();
  EXPECT_NEAR(y[0], 0.0, 1e-12);
}

TEST(Activations, ReluSoftmaxGelu) {
  auto r = relu(constant({-2, 3}, {2})).value();
  EXPECT_EQ(r.vec(), (std::vector<double>{0, 3}));
  auto s = softmax(constant({0, 0}, {2}), 0).value();
  EXPECT_EQ(s.vec(), (std::vector<double>{0.5, 0.5}));
  for (double x = -5; x <= 5; x += 0.25) {
    const long double ref = 0.5L * x * (1.0L + std::erf(static_cast<long double>(x) / std::sqrt(2.0L)));
    EXPECT_NEAR(gelu(constant({x}, {1})).item(), static_cast<double>(ref), 1e-6);
  }
}

TEST(Activations, SoftmaxRowsSumToOneAndAreShiftInvariant) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = oracle::random_tensor({4, 6}, rng, 3.0);
    auto y = softmax(V::constant(x), 1).value();
    Tensor<double> shifted = x;
    for (auto& v : shifted.data()) v += 17.5;
    auto y2 = softmax(V::constant(shifted), 1).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 6; ++c) {
        const double v = y[r * 6 + c];
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
        EXPECT_NEAR(v, y2[r * 6 + c], 1e-6);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Cosine, BasicIdentitiesAndScaleInvariance) {
  auto v = constant({1, 2, 3}, {3});
  EXPECT_NEAR(cosine_similarity(v, v).item(), 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(v, neg(v)).item(), -1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(constant({1, 0}, {2}), constant({0, 1}, {2})).item(), 0.0, 1e-15);
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = oracle::random_tensor({8}, rng);
    auto b = oracle::random_tensor({8}, rng);
    const double c = std::exp(oracle::random_vector(1, rng)[0] * 3);
    EXPECT_NEAR(cosine_similarity(scale(V::constant(a), c), V::constant(b)).item(),
                cosine_similarity(V::constant(a), V::constant(b)).item(), 1e-6);
  }
  EXPECT_THROW(cosine_similarity(constant({0, 0}, {2}), constant({1, 0}, {2})), NumericError);
  EXPECT_NEAR(l2_norm(constant({3, 4}, {2})).item(), 5.0, 1e-12);
}

TEST(Backward, SquareAndConstant) {
  Parameter<double> x(Tensor<double>::scalar(3.0));
  auto y = square(x.var());
  backward(y);
  EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);

  Parameter<double> p(Tensor<double>({2}, {1, 2}));
  auto c = add(sum_all(constant({4, 5}, {2})), scale(sum_all(p.var()), 0.0));
  backward(c);
  EXPECT_EQ(p.grad().vec(), (std::vector<double>{0, 0}));
}

TEST(Backward, NonFiniteIsSurfaced) {
  EXPECT_THROW(sqrt(constant({-1}, {1})), NumericError);
  EXPECT_THROW(div(constant({1}, {1}), constant({0}, {1})), NumericError);
}

// Every differentiable op against central differences on random shapes.
TEST(GradCheck, EveryOpOnTwentyRandomShapes) {
  using Fn = std::function<V(const V&, const V&)>;
  struct Case {
    const char* name;
    Fn fn;
    bool positive = false;  // needs strictly positive input
  };
  const std::vector<Case> cases = {
      {"add", [](const V& a, const V& b) { return add(a, b); }},
      {"sub", [](const V& a, const V& b) { return sub(a, b); }},
      {"mul", [](const V& a, const V& b) { return mul(a, b); }},
      {"div", [](const V& a, const V& b) { return div(a, add_scalar(square(b), 1.0)); }},
      {"broadcast", [](const V& a, const V& b) { return mul(a, mean(b, {0}, true)); }},
      {"relu", [](const V& a, const V&) { return relu(a); }},
      {"gelu", [](const V& a, const V&) { return gelu(a); }},
      {"sigmoid", [](const V& a, const V&) { return sigmoid(a); }},
      {"exp", [](const V& a, const V&) { return exp(scale(a, 0.5)); }},
      {"sqrt", [](const V& a, const V&) { return sqrt(a); }, true},
      {"softmax", [](const V& a, const V&) { return softmax(a, a.rank() - 1); }},
      {"sum", [](const V& a, const V&) { return sum(a, {0}); }},
      {"mean", [](const V& a, const V&) { return mean(a, {a.rank() - 1}, true); }},
      {"amax", [](const V& a, const V&) { return amax(a, {0}); }},
      {"segment_mean", [](const V& a, const V&) { return segment_mean(a, 0, 2); }},
      {"concat_slice",
       [](const V& a, const V& b) { return slice(concat<double>({a, b}, 0), 0, 1, a.dim(0)); }},
      {"cosine_rows",
       [](const V& a, const V& b) {
         return cosine_rows(reshape(a, {a.dim(0), a.numel() / a.dim(0)}),
                            reshape(b, {b.dim(0), b.numel() / b.dim(0)}));
       }},
  };
  std::mt19937_64 rng(11);
  for (const auto& c : cases) {
    for (int trial = 0; trial < 20; ++trial) {
      Shape shape = {2 + rng() % 3, 1 + rng() % 4};
      if (trial % 2) shape.push_back(1 + rng() % 3);
      auto ta = oracle::random_tensor(shape, rng);
      if (c.positive)
        for (auto& v : ta.data()) v = std::abs(v) + 0.5;
      Parameter<double> a(ta);
      Parameter<double> b(oracle::random_tensor(shape, rng));
      const auto w = oracle::random_tensor(c.fn(a.var(), b.var()).shape(), rng);
      auto report = grad_check(
          [&] { return sum_all(mul(c.fn(a.var(), b.var()), V::constant(w))); },
          {{"a", &a}, {"b", &b}});
      // Parameters an op ignores report zero error with zero checked entries
      // only when not reachable; every entry is probed here.
      EXPECT_LT(report.max_rel_error(), 1e-4) << c.name << " shape " << shape_str(shape);
    }
  }
}

TEST(GradCheck, ConvAndBatchNormOps) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    ConvSpec spec;
    spec.stride = {1, 1 + rng() % 2, 1};
    spec.pad = {rng() % 2, 1, rng() % 2};
    Parameter<double> x(oracle::random_tensor({2, 2, 3, 4, 3}, rng));
    Parameter<double> w(oracle::random_tensor({3, 2, 1 + rng() % 2, 3, 2}, rng));
    Parameter<double> b(oracle::random_tensor({3}, rng));
    Parameter<double> g(oracle::random_tensor({3}, rng));
    Parameter<double> be(oracle::random_tensor({3}, rng));
    auto f = [&] { return conv3d(x.var(), w.var(), b.var(), spec); };
    const auto r = oracle::random_tensor(f().shape(), rng);
    auto report = grad_check(
        [&] {
          return sum_all(mul(batch_norm<double>(f(), g.var(), be.var(), nullptr, true, 0.1, 1e-5),
                             V::constant(r)));
        },
        {{"x", &x}, {"w", &w}, {"b", &b}, {"gamma", &g}, {"beta", &be}});
    EXPECT_LT(report.max_rel_error(), 1e-4) << "trial " << trial;
  }
}

TEST(GradCheck, FlagsCorruptedGradient) {
  Parameter<double> p(Tensor<double>({3}, {0.3, -1.2, 0.7}));
  // y = x^3 with a deliberately wrong backward (2x instead of 3x^2).
  auto broken_cube = [](const V& x) {
    Tensor<double> out = x.value();
    for (auto& v : out.data()) v = v * v * v;
    Node<double>* xn = x.node();
    return make_op<double>("broken_cube", std::move(out), {x}, [xn](const Tensor<double>& g) {
      Tensor<double> gx = g;
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] *= 2.0 * xn->value[i];
      xn->accumulate(gx);
    });
  };
  auto report = grad_check([&] { return sum_all(broken_cube(p.var())); }, {{"p", &p}});
  EXPECT_FALSE(report.passed());
  EXPECT_GT(report.max_rel_error(), 1e-2);
}

TEST(GradCheck, KinkCrossingProbesAreDetected) {
  // relu at exactly 0 is a kink; the probe straddles it at every step size.
  Parameter<double> p(Tensor<double>({2}, {0.0, 1.0}));
  auto report = grad_check([&] { return sum_all(relu(p.var())); }, {{"p", &p}});
  ASSERT_EQ(report.params.size(), 1u);
  EXPECT_EQ(report.params[0].skipped, 1u);
  EXPECT_EQ(report.params[0].checked, 1u);
}
