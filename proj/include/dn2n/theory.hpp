#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dn2n/dn2n.hpp"
#include "dn2n/image.hpp"
#include "dn2n/kvfile.hpp"

namespace dn2n::theory {

using Vector = std::vector<double>;

/// Finite model of the observation process: y_0 = x_0 + e and y_tau = phi_tau(x_0) + e'
/// with e, e' drawn independently from one zero-mean noise alphabet and tau from
/// its own alphabet.
struct DiscreteInstance {
  Vector x0;
  std::vector<Vector> noise;
  std::vector<double> noise_probs;
  std::vector<double> taus;
  std::vector<double> tau_probs;
  std::function<Vector(double, const Vector&)> phi;

  /// Throws std::invalid_argument on bad probabilities, a noise mean that is not
  /// zero, dimension mismatches or more than 10^4 joint outcomes.
  void validate() const;
};

struct Prop1Cell {
  Vector y0;
  double tau = 0.0;
  Vector minimizer;  // weighted mean of y_tau over the cell's outcomes
  Vector target;     // phi_tau(x0)
  double error = 0.0;
};

struct Prop1Result {
  std::vector<Prop1Cell> cells;
  /// Per distinct y0: value of the minimizer at tau -> 0 along the alphabet
  /// (the tau = 0 cell, a linear extrapolation from the two smallest taus, or the single tau).
  std::vector<Vector> limits;
  double max_cell_error = 0.0;
  double max_limit_error = 0.0;
  bool verdict = false;
};

inline constexpr double kCellTolerance = 1e-12;
inline constexpr double kLimitTolerance = 1e-9;

/// Minimizes the population loss cell by cell by enumerating the joint law.
Prop1Result prop1_oracle(const DiscreteInstance& instance);

struct GapTerm {
  double raw = 0.0;        // |sum_i w_i x_{tau_i} - x_0|^2 in unit intensities
  double per_pixel = 0.0;  // raw / pixel count
};

/// Weighted mean of clean frames 1..N against frame 0; uniform weights when `weights` is empty.
GapTerm g_phi(const FrameSequence& clean, const std::vector<double>& weights = {});

/// sum_i w_i tau_i^2; uniform weights when `weights` is empty.
double expected_tau_sq(const std::vector<double>& taus, const std::vector<double>& weights = {});

struct BoundReport {
  double g_phi = 0.0;
  double g_phi_per_pixel = 0.0;
  double e_tau_sq = 0.0;
  double e_f_proxy = 0.0;  // untransformed empirical risk of the trained model (upper-bounds E_F)
  double pred_gap = 0.0;   // per-pixel |x0_hat - x0|^2, unit intensities
  KeyValues metadata;

  KeyValues to_kv() const;
};

/// Observable terms of the generalization bound for a trained model on a toy
/// sequence whose clean frames are known.
BoundReport bound_report(const nn::ModelSpec& spec, const nn::ParamStore& params, const FrameSequence& clean,
                         const FrameSequence& noisy, const TrainConfig& config, KeyValues metadata = {});

}  // namespace dn2n::theory
