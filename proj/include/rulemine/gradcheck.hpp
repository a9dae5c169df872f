#pragma once

#include <functional>

#include "rulemine/tape.hpp"

namespace rulemine::ad {

struct GradCheckReport {
  double max_rel_err = 0.0;
  int coords_checked = 0;
  std::string worst_param;
};

/// Central finite differences against reverse-mode gradients over sampled
/// coordinates of every parameter. `loss_fn` is called with a gradient sink
/// (backward expected) or nullptr (forward only); it must be deterministic,
/// which is verified by double evaluation. Coordinates where both gradients
/// are below 1e-10 in magnitude are skipped.
GradCheckReport grad_check(ParamStore& params, const std::function<double(GradBuffer*)>& loss_fn,
                           double eps, int max_coords_per_param, uint64_t seed);

}  // namespace rulemine::ad
