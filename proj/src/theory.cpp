#include "dn2n/theory.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "dn2n/metrics.hpp"

namespace dn2n::theory {

namespace {

void check_probs(const std::vector<double>& p, std::size_t n, const char* what) {
  if (p.size() != n || n == 0) throw std::invalid_argument(std::string(what) + ": probability count mismatch");
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": negative probability");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument(std::string(what) + ": probabilities must sum to 1");
}

std::vector<double> resolve_weights(const std::vector<double>& weights, std::size_t n) {
  if (weights.empty()) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  if (weights.size() != n) throw std::invalid_argument("weight count does not match");
  double s = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be non-negative");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("weights must sum to 1");
  return weights;
}

double max_abs_diff(const Vector& a, const Vector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

void DiscreteInstance::validate() const {
  if (x0.empty()) throw std::invalid_argument("x0 must be non-empty");
  if (!phi) throw std::invalid_argument("phi is not set");
  check_probs(noise_probs, noise.size(), "noise");
  check_probs(tau_probs, taus.size(), "tau");
  Vector mean(x0.size(), 0.0);
  for (std::size_t e = 0; e < noise.size(); ++e) {
    if (noise[e].size() != x0.size()) throw std::invalid_argument("noise outcome dimension mismatch");
    for (std::size_t d = 0; d < x0.size(); ++d) mean[d] += noise_probs[e] * noise[e][d];
  }
  for (double m : mean) {
    if (std::abs(m) > 1e-12) throw std::invalid_argument("noise must have zero mean");
  }
  for (double t : taus) {
    if (!(t >= 0.0)) throw std::invalid_argument("taus must be >= 0");
    if (phi(t, x0).size() != x0.size()) throw std::invalid_argument("phi changes the dimension");
  }
  if (noise.size() * noise.size() * taus.size() > 10000) {
    throw std::invalid_argument("instance has more than 10^4 joint outcomes");
  }
}

Prop1Result prop1_oracle(const DiscreteInstance& inst) {
  inst.validate();
  const std::size_t d = inst.x0.size();

  // y0 values in first-seen order; coinciding noise outcomes share a cell.
  std::vector<Vector> y0s;
  std::vector<double> y0_mass;
  std::vector<std::size_t> cell_of(inst.noise.size());
  for (std::size_t e = 0; e < inst.noise.size(); ++e) {
    Vector y(d);
    for (std::size_t c = 0; c < d; ++c) y[c] = inst.x0[c] + inst.noise[e][c];
    const auto it = std::find(y0s.begin(), y0s.end(), y);
    cell_of[e] = static_cast<std::size_t>(it - y0s.begin());
    if (it == y0s.end()) {
      y0s.push_back(y);
      y0_mass.push_back(0.0);
    }
    y0_mass[cell_of[e]] += inst.noise_probs[e];
  }

  Prop1Result res;
  std::vector<std::vector<Vector>> by_y0(y0s.size());
  for (std::size_t c = 0; c < y0s.size(); ++c) {
    if (y0_mass[c] == 0.0) continue;
    for (std::size_t t = 0; t < inst.taus.size(); ++t) {
      const double tau = inst.taus[t];
      const Vector clean = inst.phi(tau, inst.x0);
      // Sum over every joint outcome (e, e') landing in cell (y0_c, tau) of p * y_tau.
      Vector num(d, 0.0);
      double den = 0.0;
      for (std::size_t e = 0; e < inst.noise.size(); ++e) {
        if (cell_of[e] != c) continue;
        for (std::size_t e2 = 0; e2 < inst.noise.size(); ++e2) {
          const double p = inst.noise_probs[e] * inst.noise_probs[e2] * inst.tau_probs[t];
          for (std::size_t k = 0; k < d; ++k) num[k] += p * (clean[k] + inst.noise[e2][k]);
          den += p;
        }
      }
      if (den == 0.0) continue;
      Prop1Cell cell{y0s[c], tau, Vector(d), clean, 0.0};
      for (std::size_t k = 0; k < d; ++k) cell.minimizer[k] = num[k] / den;
      cell.error = max_abs_diff(cell.minimizer, cell.target);
      res.max_cell_error = std::max(res.max_cell_error, cell.error);
      by_y0[c].push_back(cell.minimizer);
      res.cells.push_back(std::move(cell));
    }
  }

  // tau -> 0 along the alphabet, per y0.
  std::vector<std::size_t> order(inst.taus.size());
  for (std::size_t t = 0; t < order.size(); ++t) order[t] = t;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return inst.taus[a] < inst.taus[b]; });
  for (std::size_t c = 0; c < y0s.size(); ++c) {
    if (by_y0[c].size() != inst.taus.size()) continue;
    const auto& f = by_y0[c];
    Vector limit = f[order[0]];
    const double t0 = inst.taus[order[0]];
    if (t0 != 0.0 && order.size() >= 2) {
      const double t1 = inst.taus[order[1]];
      for (std::size_t k = 0; k < d; ++k) {
        const double slope = (f[order[1]][k] - f[order[0]][k]) / (t1 - t0);
        limit[k] = f[order[0]][k] - slope * t0;
      }
    }
    res.max_limit_error = std::max(res.max_limit_error, max_abs_diff(limit, inst.x0));
    res.limits.push_back(std::move(limit));
  }
  res.verdict = res.max_cell_error <= kCellTolerance && res.max_limit_error <= kLimitTolerance;
  return res;
}

GapTerm g_phi(const FrameSequence& clean, const std::vector<double>& weights) {
  if (clean.size() < 2) throw std::invalid_argument("g_phi needs frames 0..N with N >= 1");
  const auto w = resolve_weights(weights, clean.last_index());
  const Image x0 = as_unit(clean[0]);
  std::vector<double> mean(x0.size(), 0.0);
  for (std::size_t i = 1; i < clean.size(); ++i) {
    const Image xi = as_unit(clean[i]);
    for (std::size_t p = 0; p < mean.size(); ++p) mean[p] += w[i - 1] * xi.pixels()[p];
  }
  GapTerm g;
  for (std::size_t p = 0; p < mean.size(); ++p) {
    const double d = mean[p] - x0.pixels()[p];
    g.raw += d * d;
  }
  g.per_pixel = g.raw / static_cast<double>(mean.size());
  return g;
}

double expected_tau_sq(const std::vector<double>& taus, const std::vector<double>& weights) {
  if (taus.empty()) throw std::invalid_argument("expected_tau_sq: no tau values");
  const auto w = resolve_weights(weights, taus.size());
  double s = 0.0;
  for (std::size_t i = 0; i < taus.size(); ++i) s += w[i] * taus[i] * taus[i];
  return s;
}

KeyValues BoundReport::to_kv() const {
  KeyValues kv = metadata;
  kv.set("g_phi", g_phi);
  kv.set("g_phi_per_pixel", g_phi_per_pixel);
  kv.set("e_tau_sq", e_tau_sq);
  kv.set("e_f_proxy", e_f_proxy);
  kv.set("pred_gap", pred_gap);
  return kv;
}

BoundReport bound_report(const nn::ModelSpec& spec, const nn::ParamStore& params, const FrameSequence& clean,
                         const FrameSequence& noisy, const TrainConfig& config, KeyValues metadata) {
  if (clean.size() != noisy.size()) throw std::invalid_argument("clean and noisy sequences differ in length");
  BoundReport r;
  const GapTerm g = g_phi(clean);
  r.g_phi = g.raw;
  r.g_phi_per_pixel = g.per_pixel;
  const auto taus = training_taus(noisy, config.seed);
  std::vector<double> tau_values;
  for (const auto& e : taus) tau_values.push_back(e.tau);
  r.e_tau_sq = expected_tau_sq(tau_values);
  r.e_f_proxy = empirical_risk(spec, params, std::span<const FrameSequence>(&noisy, 1), taus, config.threads);
  const Image x0_hat = predict(spec, params, std::span<const Image>(&noisy[0], 1), config.sigma_tilde,
                               config.k_pred, config.seed, config.threads);
  r.pred_gap = mse(x0_hat, as_unit(clean[0]));
  r.metadata = std::move(metadata);
  return r;
}

}  // namespace dn2n::theory
