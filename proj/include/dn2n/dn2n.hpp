#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dn2n/image.hpp"
#include "dn2n/kvfile.hpp"
#include "dn2n/model.hpp"
#include "dn2n/rng.hpp"
#include "dn2n/synth.hpp"

namespace dn2n {

struct TrainConfig {
  double sigma_tilde = 100.0;  // auxiliary noise std, raw255 units
  double mu = 100.0;           // averaging-loss weight
  std::size_t l_transforms = 2;
  std::size_t k_pred = 100;
  std::size_t epochs = 1000;
  double lr = 1e-4;
  std::size_t batch = 4;
  std::uint64_t seed = 1;
  nn::ModelSpec model;
  /// Draw the L transform pairs once per run instead of once per epoch.
  bool static_transforms = false;
  /// Worker count; results are identical for every value.
  std::size_t threads = 1;

  void validate() const;
  /// Every result-affecting field, in a fixed order (threads excluded).
  KeyValues to_kv() const;
  /// Overrides fields of `base` with the keys present in `kv`; unknown keys are rejected.
  static TrainConfig from_kv(const KeyValues& kv, TrainConfig base);
  static TrainConfig from_kv(const KeyValues& kv);
  std::string hash() const;
};

struct EpochLosses {
  double loss_d = 0.0;
  double loss_a = 0.0;
  double loss_t = 0.0;
};

struct TrainedModel {
  nn::ModelSpec spec;
  nn::ParamStore params;
  std::string config_hash;
  std::vector<EpochLosses> history;
};

/// (1, C+1, H, W) tensor: the unit-domain image followed by a constant plane equal to t.
nn::Tensor4 time_plane_concat(const Image& unit, double t);

/// m(y) = y + eps with eps ~ N(0, sigma_tilde^2) i.i.d. per pixel; identity for sigma_tilde = 0.
Image transform_input(const Image& raw, double sigma_tilde, rng::Stream& stream);

/// One draw of the L transform pairs (m_k, m'_k), applied and normalized.
/// input(k, j) = m_k(y_{0,j}) and target(k, j, i) = m'_k(y_{tau_i, j}); the noise
/// of m_k (resp. m'_k) is one image shared by every frame it is applied to.
class TransformedData {
 public:
  TransformedData(std::size_t l, std::size_t m, std::size_t n, std::vector<double> taus,
                  std::vector<Image> inputs, std::vector<Image> targets);

  std::size_t l() const { return l_; }
  std::size_t m() const { return m_; }
  std::size_t n() const { return n_; }
  double tau(std::size_t i) const { return taus_[i]; }
  const Image& input(std::size_t k, std::size_t j) const { return inputs_[k * m_ + j]; }
  const Image& target(std::size_t k, std::size_t j, std::size_t i) const {
    return targets_[(k * m_ + j) * n_ + i];
  }

 private:
  std::size_t l_, m_, n_;
  std::vector<double> taus_;
  std::vector<Image> inputs_;
  std::vector<Image> targets_;
};

/// Applies L fresh transform pairs drawn from streams (seed, Transform, draw, *).
TransformedData make_transformed_data(std::span<const FrameSequence> noisy,
                                      std::span<const synth::TauEntry> taus, double sigma_tilde,
                                      std::size_t l_transforms, std::uint64_t seed, std::uint64_t draw);

struct LossItem {
  std::size_t k, j, i;
};

struct LossResult {
  double value = 0.0;
  nn::ParamStore grad;
};

/// Mean over items of the per-pixel squared error between f(m_k(y_{0,j}), tau_i)
/// and m'_k(y_{tau_i,j}), with its exact gradient.
LossResult loss_d(const nn::ModelSpec& spec, const nn::ParamStore& params, const TransformedData& data,
                  std::span<const LossItem> items, std::size_t threads = 1);

/// Per-pixel squared distance between the mean reconstruction over all tau_i
/// and the mean transformed target, for one (k, j). Gradients are accumulated
/// `chunk` frames at a time.
LossResult loss_a(const nn::ModelSpec& spec, const nn::ParamStore& params, const TransformedData& data,
                  std::size_t k, std::size_t j, std::size_t chunk = 4, std::size_t threads = 1);

/// mu / (L M N), the weight of the averaging loss in the total loss.
double averaging_weight(double mu, std::size_t l, std::size_t m, std::size_t n);

/// Full-batch L_T = L_D + mu/(LMN) * L_A over every (k, j, i).
LossResult total_loss(const nn::ModelSpec& spec, const nn::ParamStore& params, const TransformedData& data,
                      double mu, std::size_t threads = 1);

/// Every (k, j, i) triple in lexicographic order.
std::vector<LossItem> all_items(const TransformedData& data);

using EpochCallback = std::function<void(std::size_t epoch, const EpochLosses&)>;

/// Minimizes the transformed-input loss with the averaging regularizer using Adam.
/// `noisy` holds the M raw255 sequences (frames 0..N each); `taus` maps tau_i to frames.
TrainedModel train(const TrainConfig& config, std::span<const FrameSequence> noisy,
                   std::span<const synth::TauEntry> taus, const EpochCallback& on_epoch = {});

/// Tau relabelling used by train() for a given seed.
std::vector<synth::TauEntry> training_taus(const FrameSequence& seq, std::uint64_t seed);

/// x0_hat = 1/(K M) sum_i sum_j f(y_{0,j} + eps_i, 0) in the unit domain; member i
/// draws eps_i from stream (seed, Prediction, i). With sigma_tilde = 0 every member
/// is identical and a single pass is evaluated.
Image predict(const nn::ModelSpec& spec, const nn::ParamStore& params, std::span<const Image> y0_frames,
              double sigma_tilde, std::size_t k, std::uint64_t seed, std::size_t threads = 1);

/// Untransformed empirical risk 1/(MN) sum_j sum_i |f(y_{0,j}, tau_i) - y_{tau_i,j}|^2 / P.
double empirical_risk(const nn::ModelSpec& spec, const nn::ParamStore& params,
                      std::span<const FrameSequence> noisy, std::span<const synth::TauEntry> taus,
                      std::size_t threads = 1);

/// Supervised pair term (input, time, target) shared with the baselines.
struct PairTerm {
  const Image* input;
  double t;
  const Image* target;
};

/// Mean per-pixel squared error of f(input, t) against target over `terms`.
LossResult pair_loss(const nn::ModelSpec& spec, const nn::ParamStore& params,
                     std::span<const PairTerm> terms, std::size_t threads = 1);

}  // namespace dn2n
