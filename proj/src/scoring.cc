#include "dsvqa/scoring.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace dsvqa {

template <typename T>
std::pair<Var<T>, Var<T>> prompt_similarity(const Var<T>& fused, const Var<T>& t_pos,
                                            const Var<T>& t_neg, double temperature) {
  const T tau = static_cast<T>(temperature);
  return {scale(cosine_rows(fused, t_pos), tau), scale(cosine_rows(fused, t_neg), tau)};
}

template <typename T>
Var<T> quality_score(const Var<T>& s_pos, const Var<T>& s_neg) {
  if (s_pos.rank() != 1 || s_pos.shape() != s_neg.shape()) {
    throw ShapeError("quality_score expects two equal-length vectors, got " +
                     shape_str(s_pos.shape()) + " and " + shape_str(s_neg.shape()));
  }
  const std::size_t b = s_pos.dim(0);
  auto logits = concat<T>({reshape(s_pos, {b, 1}), reshape(s_neg, {b, 1})}, 1);
  return reshape(slice(softmax(logits, 1), 1, 0, 1), {b});
}

template <typename T>
Var<T> plcc_loss(const Var<T>& pred, const Tensor<T>& target) {
  if (pred.rank() != 1 || target.shape() != pred.shape()) {
    throw ShapeError("plcc_loss expects equal-length vectors, got " + shape_str(pred.shape()) +
                     " and " + shape_str(target.shape()));
  }
  if (pred.dim(0) < 2) throw MetricError("plcc_loss needs at least 2 samples");
  const T eps = static_cast<T>(kVarianceEps);
  auto g = Var<T>::constant(target);
  auto pc = sub(pred, mean(pred, {0}, true));
  auto gc = sub(g, mean(g, {0}, true));
  auto cov = mean_all(mul(pc, gc));
  auto sp = sqrt(add_scalar(mean_all(square(pc)), eps));
  auto sg = sqrt(add_scalar(mean_all(square(gc)), eps));
  return add_scalar(neg(div(cov, mul(sp, sg))), T(1));
}

template std::pair<Var<float>, Var<float>> prompt_similarity(const Var<float>&, const Var<float>&,
                                                             const Var<float>&, double);
template std::pair<Var<double>, Var<double>> prompt_similarity(const Var<double>&,
                                                               const Var<double>&,
                                                               const Var<double>&, double);
template Var<float> quality_score(const Var<float>&, const Var<float>&);
template Var<double> quality_score(const Var<double>&, const Var<double>&);
template Var<float> plcc_loss(const Var<float>&, const Tensor<float>&);
template Var<double> plcc_loss(const Var<double>&, const Tensor<double>&);

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine of vectors with different widths");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na <= kNormEps || nb <= kNormEps) throw NumericError("cosine of a zero-norm vector");
  return dot / (na * nb);
}

void check_pair(const std::vector<double>& a, const std::vector<double>& b, std::size_t min_n,
                const char* what) {
  if (a.size() != b.size()) {
    throw MetricError(std::string(what) + ": length mismatch " + std::to_string(a.size()) +
                      " vs " + std::to_string(b.size()));
  }
  if (a.size() < min_n) {
    throw MetricError(std::string(what) + " needs at least " + std::to_string(min_n) +
                      " samples, got " + std::to_string(a.size()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) {
      throw MetricError(std::string(what) + ": non-finite entry at index " + std::to_string(i));
    }
  }
}

struct Moments {
  double cov = 0, var_a = 0, var_b = 0;
};

Moments moments(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  Moments m;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    m.cov += da * db;
    m.var_a += da * da;
    m.var_b += db * db;
  }
  m.cov /= n;
  m.var_a /= n;
  m.var_b /= n;
  return m;
}

}  // namespace

std::pair<double, double> prompt_similarity(const std::vector<double>& fused,
                                            const std::vector<double>& t_pos,
                                            const std::vector<double>& t_neg,
                                            double temperature) {
  return {temperature * cosine(fused, t_pos), temperature * cosine(fused, t_neg)};
}

double quality_score(double s_pos, double s_neg) { return 1.0 / (1.0 + std::exp(s_neg - s_pos)); }

double plcc(const std::vector<double>& pred, const std::vector<double>& gt) {
  check_pair(pred, gt, 2, "plcc");
  const auto m = moments(pred, gt);
  if (m.var_a <= kVarianceEps || m.var_b <= kVarianceEps) {
    throw MetricError("plcc: degenerate variance");
  }
  return std::clamp(m.cov / (std::sqrt(m.var_a) * std::sqrt(m.var_b)), -1.0, 1.0);
}

double plcc_loss(const std::vector<double>& pred, const std::vector<double>& gt) {
  check_pair(pred, gt, 2, "plcc_loss");
  const auto m = moments(pred, gt);
  return 1.0 - m.cov / (std::sqrt(m.var_a + kVarianceEps) * std::sqrt(m.var_b + kVarianceEps));
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 hold ranks i+1..j
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double srocc(const std::vector<double>& pred, const std::vector<double>& gt) {
  check_pair(pred, gt, 2, "srocc");
  return plcc(average_ranks(pred), average_ranks(gt));
}

double logistic4(const std::array<double, 4>& b, double x) {
  return b[1] + (b[0] - b[1]) / (1.0 + std::exp(-(x - b[2]) / b[3]));
}

double LogisticFit::operator()(double x) const { return logistic4(beta, x); }

namespace {

double sum_sq(const std::array<double, 4>& beta, const std::vector<double>& x,
              const std::vector<double>& y) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - logistic4(beta, x[i]);
    s += r * r;
  }
  return s;
}

}  // namespace

LogisticFit logistic_fit(const std::vector<double>& pred, const std::vector<double>& gt,
                         const LogisticFitOptions& options) {
  check_pair(pred, gt, 4, "logistic_fit");
  const auto m = moments(pred, gt);
  if (m.var_a <= kVarianceEps) throw MetricError("logistic_fit: constant predictions");
  if (m.var_b <= kVarianceEps) throw MetricError("logistic_fit: constant ground truth");

  const std::size_t n = pred.size();
  const double mean_x = std::accumulate(pred.begin(), pred.end(), 0.0) / static_cast<double>(n);
  // Orient the starting curve with the data: b4 cannot cross zero during the
  // search, so a decreasing relation starts with the asymptotes swapped.
  double hi = *std::max_element(gt.begin(), gt.end());
  double lo = *std::min_element(gt.begin(), gt.end());
  if (m.cov < 0) std::swap(hi, lo);
  std::array<double, 4> beta = {hi, lo, mean_x, std::sqrt(m.var_a)};
  LogisticFit fit;
  fit.initial_sse = sum_sq(beta, pred, gt);
  double sse = fit.initial_sse;
  double lambda = 1e-3;

  Eigen::MatrixXd jac(n, 4);
  Eigen::VectorXd resid(n);
  for (int it = 0; it < options.max_iterations; ++it) {
    fit.iterations = it + 1;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (pred[i] - beta[2]) / beta[3];
      const double s = 1.0 / (1.0 + std::exp(-u));
      const double ds = s * (1.0 - s);
      const double span = beta[0] - beta[1];
      resid(i) = gt[i] - (beta[1] + span * s);
      jac(i, 0) = s;
      jac(i, 1) = 1.0 - s;
      jac(i, 2) = -span * ds / beta[3];
      jac(i, 3) = -span * ds * u / beta[3];
    }
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const Eigen::Vector4d jtr = jac.transpose() * resid;
    if (jtr.lpNorm<Eigen::Infinity>() <= options.tolerance * options.tolerance) {
      fit.converged = true;
      break;
    }

    bool accepted = false;
    bool tiny_step = false;
    while (lambda < 1e16) {
      Eigen::Matrix4d damped = jtj;
      for (int d = 0; d < 4; ++d) damped(d, d) += lambda * std::max(jtj(d, d), 1e-12);
      const Eigen::Vector4d step = damped.ldlt().solve(jtr);
      std::array<double, 4> trial = beta;
      for (int d = 0; d < 4; ++d) trial[d] += step(d);
      const double trial_sse =
          trial[3] != 0.0 && std::isfinite(trial[3]) ? sum_sq(trial, pred, gt) : INFINITY;
      double beta_norm = 0;
      for (double b : beta) beta_norm += b * b;
      tiny_step = step.norm() <= options.tolerance * (std::sqrt(beta_norm) + options.tolerance);
      if (std::isfinite(trial_sse) && trial_sse <= sse) {
        const double drop = sse - trial_sse;
        beta = trial;
        sse = trial_sse;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (tiny_step || drop <= options.tolerance * options.tolerance * (sse + 1e-300)) {
          tiny_step = true;
        }
        break;
      }
      if (tiny_step) break;
      lambda *= 10.0;
    }
    if (tiny_step || !accepted) {
      fit.converged = tiny_step;
      break;
    }
  }
  if (beta[3] < 0) {
    std::swap(beta[0], beta[1]);
    beta[3] = -beta[3];
  }
  fit.beta = beta;
  fit.sse = sse;
  return fit;
}

}  // namespace dsvqa
