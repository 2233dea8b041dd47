#pragma once

#include <cstdint>
#include <vector>

#include "dn2n/model.hpp"

namespace dn2n::nn {

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(std::size_t parameter_count, double learning_rate = 1e-4)
      : lr(learning_rate), m(parameter_count, 0.0), v(parameter_count, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state);

}  // namespace dn2n::nn
