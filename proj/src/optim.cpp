#include "rulemine/optim.hpp"

#include <cassert>
#include <cmath>

namespace rulemine::ad {

void AdamState::init(const ParamStore& store) {
  m.clear();
  v.clear();
  m.reserve(store.count());
  v.reserve(store.count());
  for (size_t i = 0; i < store.count(); ++i) {
    const Mat& p = store.at(i).value;
    m.emplace_back(p.rows, p.cols);
    v.emplace_back(p.rows, p.cols);
  }
  step = 0;
}

void adam_step(ParamStore& params, const GradBuffer& grads, AdamState& s) {
  assert(s.m.size() == params.count());
  s.step += 1;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (size_t i = 0; i < params.count(); ++i) {
    Mat& p = params.at(i).value;
    const Mat& g = grads.at(i);
    Mat& m = s.m[i];
    Mat& v = s.v[i];
    for (size_t k = 0; k < p.size(); ++k) {
      const double gk = g.a[k];
      m.a[k] = s.beta1 * m.a[k] + (1.0 - s.beta1) * gk;
      v.a[k] = s.beta2 * v.a[k] + (1.0 - s.beta2) * gk * gk;
      const double mhat = m.a[k] / bc1;
      const double vhat = v.a[k] / bc2;
      p.a[k] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

}  // namespace rulemine::ad
