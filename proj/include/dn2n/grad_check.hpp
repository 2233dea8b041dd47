#pragma once

#include <cstdint>
#include <functional>

#include "dn2n/model.hpp"

namespace dn2n::nn {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  /// Parameters to probe; every parameter is checked when the model has fewer.
  std::size_t samples = 50;
  std::uint64_t seed = 1;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  /// Probes discarded because the perturbation moved a unit across the rectifier kink.
  std::size_t kink_skips = 0;
  bool passed = false;
};

/// Compares backward() against central finite differences of the scalar
/// loss <c, f(x)>, where c is a fixed pseudo-random projection. The relative
/// error of a probe is |a - n| / max(|a|, |n|, 1e-3 * max_k |a_k|, 1e-12).
/// `tamper` may alter the analytic gradient before comparison (negative controls).
GradCheckReport grad_check(const ModelSpec& spec, const ParamStore& params, const Tensor4& input,
                           const GradCheckOptions& options = {},
                           const std::function<void(ParamStore&)>& tamper = {});

}  // namespace dn2n::nn
