#pragma once

#include "rulemine/tape.hpp"

namespace rulemine::ad {

/// Adam with bias correction. Moments are shaped per parameter on first use.
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Mat> m, v;

  void init(const ParamStore& store);
};

void adam_step(ParamStore& params, const GradBuffer& grads, AdamState& state);

}  // namespace rulemine::ad
