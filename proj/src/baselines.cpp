#include "dn2n/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dn2n/adam.hpp"
#include "dn2n/errors.hpp"

namespace dn2n::baselines {

PairingPlan build_td_pairs(const FrameSequence& seq) {
  if (seq.size() < 2) throw DataError("adjacent-frame pairing needs at least two frames");
  PairingPlan plan;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) plan.pairs.emplace_back(i, i + 1);
  return plan;
}

std::string td_config_hash(const TrainConfig& config) {
  return fnv1a_hex("method=td\n" + config.to_kv().str());
}

TrainedModel train_td(const PairingPlan& plan, const FrameSequence& seq, const TrainConfig& config,
                      const EpochCallback& on_epoch) {
  config.validate();
  if (plan.pairs.empty()) throw std::invalid_argument("empty pairing plan");
  std::vector<Image> frames;
  frames.reserve(seq.size());
  for (const auto& f : seq.frames()) frames.push_back(as_unit(f));
  std::vector<PairTerm> terms;
  for (const auto& [src, dst] : plan.pairs) {
    if (src >= seq.size() || dst >= seq.size()) throw DataError("pairing plan refers to a missing frame");
    terms.push_back({&frames[src], 0.0, &frames[dst]});
  }

  TrainedModel model{config.model, nn::init_params(config.model, config.seed), td_config_hash(config), {}};
  nn::AdamState adam(model.params.size(), config.lr);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    auto order = terms;
    rng::Stream shuffle(config.seed, rng::Purpose::Shuffle, epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    EpochLosses losses;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::span<const PairTerm> batch(order.data() + start, std::min(config.batch, order.size() - start));
      auto r = pair_loss(model.spec, model.params, batch, config.threads);
      const bool finite = std::isfinite(r.value) &&
                          std::all_of(r.grad.values().begin(), r.grad.values().end(),
                                      [](double v) { return std::isfinite(v); });
      if (!finite) {
        throw NumericError("non-finite TD loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start));
      }
      nn::adam_step(model.params, r.grad, adam);
      losses.loss_d += r.value * static_cast<double>(batch.size());
    }
    losses.loss_d /= static_cast<double>(order.size());
    losses.loss_t = losses.loss_d;
    model.history.push_back(losses);
    if (on_epoch) on_epoch(epoch, losses);
  }
  return model;
}

Image predict_td(const nn::ModelSpec& spec, const nn::ParamStore& params, const Image& y0, std::size_t threads) {
  return predict(spec, params, std::span<const Image>(&y0, 1), 0.0, 1, 0, threads);
}

Image frame_average(const FrameSequence& seq) {
  if (seq.size() == 0) throw std::invalid_argument("frame_average: empty sequence");
  const Image& ref = seq[0];
  std::vector<double> sum(ref.size(), 0.0);
  for (const auto& f : seq.frames()) {
    const auto px = f.pixels();
    for (std::size_t p = 0; p < sum.size(); ++p) sum[p] += px[p];
  }
  for (auto& v : sum) v /= static_cast<double>(seq.size());
  return Image(ref.height(), ref.width(), std::move(sum), ref.domain());
}

}  // namespace dn2n::baselines
