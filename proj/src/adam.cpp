#include "dn2n/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace dn2n::nn {

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state) {
  if (!params.same_layout(grads) || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto p = params.values();
  auto g = grads.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace dn2n::nn
