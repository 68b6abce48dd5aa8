#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsvqa/layers.h"

namespace dsvqa {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so entries whose true
  /// gradient is ~0 (biases ahead of batch norm) are compared absolutely.
  /// Probe rounding noise is about 1e-16 * |loss| / step, i.e. ~1e-11 for an
  /// O(1) loss.
  double scale_floor = 1e-5;
  /// Entries probed per parameter tensor; 0 probes every entry.
  std::size_t max_entries = 0;
  /// Probes whose +/- step crosses a ReLU or max kink are retried with the
  /// step divided by 10, at most this many times, then skipped.
  int max_step_shrinks = 3;
  std::uint64_t seed = 0;
};

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  std::size_t shrunk = 0;
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double tolerance = 0.0;

  double max_rel_error() const;
  bool passed() const;
};

/// Compares reverse-mode gradients of `loss` against central differences.
/// `loss` must be deterministic and side-effect free (no BN running-stat
/// updates) because it is re-evaluated for every probe.
GradCheckReport grad_check(const std::function<Var<double>()>& loss,
                           const std::vector<std::pair<std::string, Parameter<double>*>>& params,
                           const GradCheckOptions& options = {});

}  // namespace dsvqa
