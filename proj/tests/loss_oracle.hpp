#pragma once

// Reference evaluation of the training losses from plain forward passes, and a
// directional finite-difference check of the library's analytic gradients.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dn2n/dn2n.hpp"
#include "dn2n/rng.hpp"

namespace dn2n::test {

struct OracleLosses {
  double d, a, t;
};

inline double per_pixel_sq(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) s += (a[p] - b[p]) * (a[p] - b[p]);
  return s / static_cast<double>(a.size());
}

inline OracleLosses oracle_losses(const nn::ModelSpec& spec, const nn::ParamStore& params, const TransformedData& data,
                                  double mu) {
  double d = 0.0, a = 0.0;
  for (std::size_t k = 0; k < data.l(); ++k) {
    for (std::size_t j = 0; j < data.m(); ++j) {
      const Image& in = data.input(k, j);
      std::vector<double> mean_out(in.size(), 0.0), mean_tgt(in.size(), 0.0);
      for (std::size_t i = 0; i < data.n(); ++i) {
        const auto out = nn::predict(spec, params, time_plane_concat(in, data.tau(i)));
        const auto tgt = data.target(k, j, i).pixels();
        d += per_pixel_sq(out.values(), tgt);
        for (std::size_t p = 0; p < in.size(); ++p) {
          mean_out[p] += out.values()[p] / static_cast<double>(data.n());
          mean_tgt[p] += tgt[p] / static_cast<double>(data.n());
        }
      }
      a += per_pixel_sq(mean_out, mean_tgt);
    }
  }
  const double lmn = static_cast<double>(data.l() * data.m() * data.n());
  d /= lmn;
  a /= static_cast<double>(data.l() * data.m());
  return {d, a, d + mu / lmn * a};
}

/// Signs of every rectified activation over all (k, j, i) inputs.
inline std::vector<bool> all_signs(const nn::ModelSpec& spec, const nn::ParamStore& params,
                                   const TransformedData& data) {
  std::vector<bool> signs;
  for (std::size_t k = 0; k < data.l(); ++k) {
    for (std::size_t j = 0; j < data.m(); ++j) {
      for (std::size_t i = 0; i < data.n(); ++i) {
        const auto s =
            nn::forward(spec, params, time_plane_concat(data.input(k, j), data.tau(i))).tape.activation_signs();
        signs.insert(signs.end(), s.begin(), s.end());
      }
    }
  }
  return signs;
}

struct GradientCheck {
  OracleLosses analytic{};  // library values
  OracleLosses oracle{};    // reference values
  double worst_d = 0.0, worst_a = 0.0, worst_t = 0.0;
  double worst_split = 0.0;  // |grad L_T - grad L_D - w * grad L_A|, relative
  std::size_t used = 0, tried = 0;

  double worst() const { return std::max({worst_d, worst_a, worst_t}); }
};

/// Compares the library's L_D, L_A, L_T gradients with central differences of the
/// reference losses along random unit directions. Directions whose +-h probe
/// crosses an activation kink are skipped.
inline GradientCheck check_gradients(const nn::ModelSpec& spec, const nn::ParamStore& params,
                                     const TransformedData& data, double mu, std::size_t directions,
                                     double h = 1e-5) {
  GradientCheck r;
  const auto d = loss_d(spec, params, data, all_items(data));
  nn::ParamStore ga = params.zeros_like();
  double la = 0.0;
  const double lm = static_cast<double>(data.l() * data.m());
  for (std::size_t k = 0; k < data.l(); ++k) {
    for (std::size_t j = 0; j < data.m(); ++j) {
      const auto term = loss_a(spec, params, data, k, j, 2);
      la += term.value / lm;
      ga.add_scaled(term.grad, 1.0 / lm);
    }
  }
  const auto t = total_loss(spec, params, data, mu);
  r.analytic = {d.value, la, t.value};
  r.oracle = oracle_losses(spec, params, data, mu);

  const double w = averaging_weight(mu, data.l(), data.m(), data.n());
  for (std::size_t q = 0; q < params.size(); ++q) {
    const double parts = d.grad.values()[q] + w * ga.values()[q];
    const double scale = std::max({std::abs(parts), std::abs(t.grad.values()[q]), 1e-12});
    r.worst_split = std::max(r.worst_split, std::abs(t.grad.values()[q] - parts) / scale);
  }

  const auto dot = [](std::span<const double> a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) s += a[i] * b[i];
    return s;
  };
  const auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-300}); };
  const auto base_signs = all_signs(spec, params, data);
  for (std::uint64_t dir = 0; r.used < directions && dir < 3 * directions; ++dir) {
    ++r.tried;
    rng::Stream s(dir, rng::Purpose::Test, 99);
    std::vector<double> v(params.size());
    double norm = 0.0;
    for (auto& x : v) {
      x = s.normal();
      norm += x * x;
    }
    for (auto& x : v) x /= std::sqrt(norm);
    nn::ParamStore plus = params, minus = params;
    for (std::size_t q = 0; q < v.size(); ++q) {
      plus.values()[q] += h * v[q];
      minus.values()[q] -= h * v[q];
    }
    if (all_signs(spec, plus, data) != base_signs || all_signs(spec, minus, data) != base_signs) continue;
    ++r.used;
    const auto up = oracle_losses(spec, plus, data, mu);
    const auto down = oracle_losses(spec, minus, data, mu);
    r.worst_d = std::max(r.worst_d, rel(dot(d.grad.values(), v), (up.d - down.d) / (2 * h)));
    r.worst_a = std::max(r.worst_a, rel(dot(ga.values(), v), (up.a - down.a) / (2 * h)));
    r.worst_t = std::max(r.worst_t, rel(dot(t.grad.values(), v), (up.t - down.t) / (2 * h)));
  }
  return r;
}

}  // namespace dn2n::test
