#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "dn2n/dn2n.hpp"
#include "dn2n/image.hpp"

namespace dn2n::baselines {

/// (source frame, target frame) index pairs.
struct PairingPlan {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// Adjacent-frame pairs i -> i+1 over the whole sequence.
PairingPlan build_td_pairs(const FrameSequence& seq);

/// Noise2Noise on adjacent frames: minimizes |f(y_src, 0) - y_dst|^2 per pixel with
/// the same optimizer, batching and seeding as dn2n::train. The time plane is 0
/// and no auxiliary noise is added; sigma_tilde, mu, l_transforms and k_pred are unused.
TrainedModel train_td(const PairingPlan& plan, const FrameSequence& seq, const TrainConfig& config,
                      const EpochCallback& on_epoch = {});

/// Hash identifying a TD run (distinct from a dn2n run with the same config).
std::string td_config_hash(const TrainConfig& config);

/// f(y_0, 0), i.e. dn2n::predict with sigma_tilde = 0 and K = 1.
Image predict_td(const nn::ModelSpec& spec, const nn::ParamStore& params, const Image& y0, std::size_t threads = 1);

/// Pixel-wise mean over all frames, in the frames' domain.
Image frame_average(const FrameSequence& seq);

}  // namespace dn2n::baselines
