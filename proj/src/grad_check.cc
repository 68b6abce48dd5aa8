#include "dsvqa/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dsvqa {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& p : params) worst = std::max(worst, p.max_rel_error);
  return worst;
}

bool GradCheckReport::passed() const {
  for (const auto& p : params) {
    if (p.checked == 0 || !(p.max_rel_error < tolerance)) return false;
  }
  return !params.empty();
}

namespace {

struct Probe {
  double value;
  std::uint64_t signature;
};

Probe evaluate(const std::function<Var<double>()>& loss) {
  NoGradGuard no_grad;
  KinkTrace trace;
  const double v = loss().item();
  return {v, trace.signature()};
}

std::vector<std::size_t> pick_entries(std::size_t n, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (limit == 0 || limit >= n) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport grad_check(const std::function<Var<double>()>& loss,
                           const std::vector<std::pair<std::string, Parameter<double>*>>& params,
                           const GradCheckOptions& options) {
  for (auto& [name, p] : params) p->zero_grad();
  {
    auto root = loss();
    backward(root);
  }
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) analytic.push_back(p->grad());

  const std::uint64_t base_signature = evaluate(loss).signature;
  Rng rng(options.seed);

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& [name, p] = params[k];
    ParamCheck check;
    check.name = name;
    auto& values = p->value();
    for (std::size_t i : pick_entries(values.numel(), options.max_entries, rng)) {
      const double original = values[i];
      double step = options.step;
      bool resolved = false;
      double numeric = 0.0;
      for (int attempt = 0; attempt <= options.max_step_shrinks; ++attempt) {
        values[i] = original + step;
        const Probe plus = evaluate(loss);
        values[i] = original - step;
        const Probe minus = evaluate(loss);
        values[i] = original;
        if (plus.signature == base_signature && minus.signature == base_signature) {
          numeric = (plus.value - minus.value) / (2.0 * step);
          resolved = true;
          if (attempt > 0) ++check.shrunk;
          break;
        }
        step /= 10.0;
      }
      if (!resolved) {
        ++check.skipped;
        continue;
      }
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double rel =
          abs_err / std::max({std::abs(a), std::abs(numeric), options.scale_floor});
      ++check.checked;
      check.max_abs_error = std::max(check.max_abs_error, abs_err);
      if (rel > check.max_rel_error) {
        check.max_rel_error = rel;
        check.worst_index = i;
      }
    }
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace dsvqa
