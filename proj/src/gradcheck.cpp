#include "rulemine/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rulemine/errors.hpp"
#include "rulemine/rng.hpp"

namespace rulemine::ad {

GradCheckReport grad_check(ParamStore& params, const std::function<double(GradBuffer*)>& loss_fn,
                           double eps, int max_coords_per_param, uint64_t seed) {
  const double l0 = loss_fn(nullptr);
  const double l1 = loss_fn(nullptr);
  if (l0 != l1) fail(ErrorCategory::numeric, "loss function is not deterministic");

  GradBuffer analytic(params);
  loss_fn(&analytic);

  GradCheckReport report;
  for (size_t pi = 0; pi < params.count(); ++pi) {
    Param& p = params.at(pi);
    const int total = static_cast<int>(p.value.size());
    Rng rng(mix_seed(seed, static_cast<uint64_t>(pi)));
    std::vector<int> coords = rng.sample_indices(total, std::min(total, max_coords_per_param));
    for (int c : coords) {
      const double saved = p.value.a[static_cast<size_t>(c)];
      p.value.a[static_cast<size_t>(c)] = saved + eps;
      const double lp = loss_fn(nullptr);
      p.value.a[static_cast<size_t>(c)] = saved - eps;
      const double lm = loss_fn(nullptr);
      p.value.a[static_cast<size_t>(c)] = saved;
      const double fd = (lp - lm) / (2.0 * eps);
      const double an = analytic.of(p).a[static_cast<size_t>(c)];
      // the floor keeps roundoff on near-zero gradients from dominating the ratio
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      const double rel = std::abs(fd - an) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p.name;
      }
    }
  }
  return report;
}

}  // namespace rulemine::ad
