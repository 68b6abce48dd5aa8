#pragma once

#include <array>
#include <utility>
#include <vector>

#include "dsvqa/ops.h"

namespace dsvqa {

/// Degenerate metric input: too few samples, zero variance, length mismatch.
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Variance guard added inside each square root of the correlation loss.
inline constexpr double kVarianceEps = 1e-12;

// ---- differentiable scoring ------------------------------------------------

/// Temperature-scaled cosine of each fused row (B x D) with the two prompts
/// (D each). Returns (s_pos, s_neg), each of length B.
template <typename T>
std::pair<Var<T>, Var<T>> prompt_similarity(const Var<T>& fused, const Var<T>& t_pos,
                                            const Var<T>& t_neg, double temperature);

/// Two-way softmax probability of the positive prompt. Inputs of length B.
template <typename T>
Var<T> quality_score(const Var<T>& s_pos, const Var<T>& s_neg);

/// 1 - PLCC between predictions (length B) and fixed targets, population
/// moments, with kVarianceEps inside both square roots.
template <typename T>
Var<T> plcc_loss(const Var<T>& pred, const Tensor<T>& target);

// ---- scalar metrics ---------------------------------------------------------

struct QualityPrediction {
  double q_pre = 0.5;
  double s_pos = 0.0;
  double s_neg = 0.0;
};

std::pair<double, double> prompt_similarity(const std::vector<double>& fused,
                                            const std::vector<double>& t_pos,
                                            const std::vector<double>& t_neg,
                                            double temperature = 1.0);

/// exp(s_pos) / (exp(s_pos) + exp(s_neg)), evaluated as a logistic of the
/// difference. Lies strictly inside (0, 1) while |s_pos - s_neg| < 36.
double quality_score(double s_pos, double s_neg);

/// Pearson correlation. Throws MetricError when n < 2, the lengths differ, or
/// either population variance is <= kVarianceEps.
double plcc(const std::vector<double>& pred, const std::vector<double>& gt);

/// 1 - PLCC with the same variance guard as the differentiable loss.
double plcc_loss(const std::vector<double>& pred, const std::vector<double>& gt);

/// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(const std::vector<double>& values);

/// Spearman correlation: Pearson correlation of average ranks.
double srocc(const std::vector<double>& pred, const std::vector<double>& gt);

/// Four-parameter monotone logistic
/// f(x) = b2 + (b1 - b2) / (1 + exp(-(x - b3) / b4)), canonicalized to b4 > 0.
struct LogisticFit {
  std::array<double, 4> beta{};
  double sse = 0.0;          // residual sum of squares at the solution
  double initial_sse = 0.0;  // residual at the starting guess
  int iterations = 0;
  bool converged = false;

  double operator()(double x) const;
};

double logistic4(const std::array<double, 4>& beta, double x);

struct LogisticFitOptions {
  int max_iterations = 200;
  double tolerance = 1e-8;
};

/// Least-squares fit mapping predictions to MOS with Levenberg-Marquardt
/// damping. Throws MetricError on degenerate input (n < 4, constant x or
/// constant y). Non-convergence is reported through `converged`.
LogisticFit logistic_fit(const std::vector<double>& pred, const std::vector<double>& gt,
                         const LogisticFitOptions& options = {});

}  // namespace dsvqa
