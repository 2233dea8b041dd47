#include "dn2n/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dn2n/rng.hpp"

namespace dn2n::nn {

GradCheckReport grad_check(const ModelSpec& spec, const ParamStore& params, const Tensor4& input,
                           const GradCheckOptions& options,
                           const std::function<void(ParamStore&)>& tamper) {
  rng::Stream stream(options.seed, rng::Purpose::GradCheck);
  ForwardResult base = forward(spec, params, input);
  Tensor4 projection(base.output.n(), base.output.c(), base.output.h(), base.output.w());
  for (double& v : projection.values()) v = 2.0 * stream.uniform() - 1.0;

  auto loss_of = [&](const Tensor4& out) {
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += projection.values()[i] * out.values()[i];
    return acc;
  };

  ParamStore analytic = backward(spec, params, base.tape, projection);
  if (tamper) tamper(analytic);
  const std::vector<bool> base_signs = base.tape.activation_signs();

  std::vector<std::size_t> order(params.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[stream.below(i)]);

  double scale = 0.0;
  for (double g : analytic.values()) scale = std::max(scale, std::fabs(g));
  const double floor = std::max(1e-3 * scale, 1e-12);

  GradCheckReport report;
  ParamStore probe = params;
  const std::size_t wanted = std::min(options.samples, params.size());
  for (std::size_t idx : order) {
    if (report.checked == wanted) break;
    const double orig = probe.values()[idx];
    probe.values()[idx] = orig + options.step;
    ForwardResult plus = forward(spec, probe, input);
    probe.values()[idx] = orig - options.step;
    ForwardResult minus = forward(spec, probe, input);
    probe.values()[idx] = orig;
    if (plus.tape.activation_signs() != base_signs || minus.tape.activation_signs() != base_signs) {
      ++report.kink_skips;
      continue;
    }
    const double numeric = (loss_of(plus.output) - loss_of(minus.output)) / (2.0 * options.step);
    const double a = analytic.values()[idx];
    const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), floor});
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = idx;
    }
    ++report.checked;
  }
  report.passed = report.checked > 0 && report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace dn2n::nn
