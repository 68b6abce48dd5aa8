#pragma once

#include <string>
#include <vector>

#include "dsvqa/grad_check.h"

namespace dsvqa {

struct GradSuiteOptions {
  std::size_t dim = 32;
  std::size_t frames = 4;
  std::size_t spatial = 8;  // clip H = W
  std::size_t batch = 4;
  std::size_t fragment_channels = 16;
  std::uint64_t seed = 0;
  GradCheckOptions check;  // max_entries defaults to 24 per tensor here

  GradSuiteOptions() { check.max_entries = 24; }
};

struct ModuleCheck {
  std::string module;
  GradCheckReport report;
  double seconds = 0.0;
};

/// f64 gradient checks of every head in isolation, the text adapter, the
/// concat baseline, the correlation loss and the end-to-end model. Zero
/// initialized tensors are randomized first so every path carries gradient.
std::vector<ModuleCheck> run_grad_suite(const GradSuiteOptions& options = {});

}  // namespace dsvqa
