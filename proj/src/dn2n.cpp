#include "dn2n/dn2n.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "dn2n/adam.hpp"
#include "dn2n/errors.hpp"
#include "dn2n/parallel.hpp"

namespace dn2n {

namespace {

// Tapes for a whole loss_a pass are kept when they fit in this many bytes;
// otherwise the forward pass is recomputed chunk by chunk.
constexpr std::size_t kTapeBudgetBytes = std::size_t{1} << 30;

std::size_t tape_doubles(const nn::ModelSpec& spec, std::size_t h, std::size_t w) {
  std::size_t total = 2 * spec.in_channels * h * w;  // input and enc_in[0]
  const std::size_t nl = spec.levels.size();
  for (std::size_t l = 0; l < nl; ++l) {
    const std::size_t px = (h >> l) * (w >> l);
    const std::size_t cin = l == 0 ? 0 : spec.levels[l - 1];
    total += (cin + 2 * spec.levels[l]) * px;
    if (l + 1 < nl) total += (spec.levels[l + 1] + 5 * spec.levels[l]) * px;
  }
  return total + spec.levels[0] * h * w;
}

std::vector<double> gaussian_field(std::size_t count, double sigma, rng::Stream& stream) {
  std::vector<double> out(count, 0.0);
  if (sigma == 0.0) return out;
  for (auto& v : out) v = sigma * stream.normal();
  return out;
}

Image add_field(const Image& raw, const std::vector<double>& field) {
  std::vector<double> px(raw.pixels().begin(), raw.pixels().end());
  for (std::size_t p = 0; p < px.size(); ++p) px[p] += field[p];
  return Image(raw.height(), raw.width(), std::move(px), raw.domain());
}

void require_unit(const Image& im, const char* what) {
  if (im.domain() != PixelDomain::Unit) {
    throw std::invalid_argument(std::string(what) + ": expected a unit-domain image");
  }
}

nn::Tensor4 output_grad(const nn::Tensor4& out, std::span<const double> target, double scale) {
  nn::Tensor4 g(1, 1, out.h(), out.w());
  for (std::size_t p = 0; p < target.size(); ++p) g.data()[p] = scale * (out.data()[p] - target[p]);
  return g;
}

double squared_error(const nn::Tensor4& out, std::span<const double> target) {
  double s = 0.0;
  for (std::size_t p = 0; p < target.size(); ++p) {
    const double d = out.data()[p] - target[p];
    s += d * d;
  }
  return s;
}

void check_output(const nn::ModelSpec& spec, const Image& target) {
  if (spec.out_channels != 1) throw std::invalid_argument("model must produce one output channel");
  if (target.height() % spec.spatial_multiple() != 0 || target.width() % spec.spatial_multiple() != 0) {
    throw std::invalid_argument("image size " + std::to_string(target.height()) + "x" +
                                std::to_string(target.width()) + " is not a multiple of " +
                                std::to_string(spec.spatial_multiple()));
  }
}

// Shared body of loss_a: value, and the gradient when `grad` is set.
LossResult averaging_term(const nn::ModelSpec& spec, const nn::ParamStore& params, const TransformedData& data,
                          std::size_t k, std::size_t j, std::size_t chunk, std::size_t threads, bool grad) {
  const std::size_t n = data.n();
  if (n == 0) throw std::invalid_argument("loss_a: no frames");
  if (chunk == 0) throw std::invalid_argument("loss_a: chunk must be >= 1");
  const Image& in = data.input(k, j);
  check_output(spec, in);
  const std::size_t pixels = in.size();

  std::vector<double> ybar(pixels, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = data.target(k, j, i).pixels();
    for (std::size_t p = 0; p < pixels; ++p) ybar[p] += t[p];
  }
  for (auto& v : ybar) v /= static_cast<double>(n);

  const bool keep =
      grad && n * tape_doubles(spec, in.height(), in.width()) * sizeof(double) <= kTapeBudgetBytes;
  std::vector<std::optional<nn::ForwardResult>> tapes(keep ? n : 0);
  std::vector<nn::Tensor4> outs(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const nn::Tensor4 x = time_plane_concat(in, data.tau(i));
    if (keep) {
      tapes[i] = nn::forward(spec, params, x);
      outs[i] = tapes[i]->output;
    } else {
      outs[i] = nn::predict(spec, params, x);
    }
  });

  std::vector<double> mean(pixels, 0.0);
  for (const auto& o : outs) {
    for (std::size_t p = 0; p < pixels; ++p) mean[p] += o.data()[p];
  }
  double value = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    mean[p] /= static_cast<double>(n);
    const double d = mean[p] - ybar[p];
    value += d * d;
  }
  LossResult result{value / static_cast<double>(pixels), {}};
  if (!grad) return result;

  // d value / d out_i = 2 (mean - ybar) / (N P), the same for every i.
  nn::Tensor4 g(1, 1, in.height(), in.width());
  const double scale = 2.0 / (static_cast<double>(n) * static_cast<double>(pixels));
  for (std::size_t p = 0; p < pixels; ++p) g.data()[p] = scale * (mean[p] - ybar[p]);

  result.grad = params.zeros_like();
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    std::vector<nn::ParamStore> part(count);
    parallel_for(count, threads, [&](std::size_t c) {
      const std::size_t i = start + c;
      if (keep) {
        part[c] = nn::backward(spec, params, tapes[i]->tape, g);
        tapes[i].reset();
      } else {
        const auto fw = nn::forward(spec, params, time_plane_concat(in, data.tau(i)));
        part[c] = nn::backward(spec, params, fw.tape, g);
      }
    });
    for (const auto& p : part) result.grad.add_scaled(p);
  }
  return result;
}

std::string describe_items(std::span<const LossItem> items) {
  std::ostringstream os;
  for (std::size_t b = 0; b < items.size(); ++b) {
    os << (b ? " " : "") << "(k=" << items[b].k << ",j=" << items[b].j << ",i=" << items[b].i << ")";
  }
  return os.str();
}

bool grad_finite(const nn::ParamStore& g) {
  return std::all_of(g.values().begin(), g.values().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

void TrainConfig::validate() const {
  if (!(sigma_tilde >= 0.0) || !std::isfinite(sigma_tilde)) throw std::invalid_argument("sigma_tilde must be >= 0");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw std::invalid_argument("mu must be >= 0");
  if (l_transforms == 0) throw std::invalid_argument("l_transforms must be >= 1");
  if (k_pred == 0) throw std::invalid_argument("k_pred must be >= 1");
  if (batch == 0) throw std::invalid_argument("batch must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be > 0");
  model.validate();
  if (model.in_channels != 2 || model.out_channels != 1) {
    throw std::invalid_argument("model must map 2 input channels (image, time) to 1 output channel");
  }
}

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("sigma_tilde", sigma_tilde);
  kv.set("mu", mu);
  kv.set("l_transforms", std::uint64_t{l_transforms});
  kv.set("k_pred", std::uint64_t{k_pred});
  kv.set("epochs", std::uint64_t{epochs});
  kv.set("lr", lr);
  kv.set("batch", std::uint64_t{batch});
  kv.set("seed", seed);
  kv.set("levels", nn::format_levels(model.levels));
  kv.set("kernel", std::uint64_t{model.kernel});
  kv.set("leaky_slope", model.leaky_slope);
  kv.set("in_channels", std::uint64_t{model.in_channels});
  kv.set("out_channels", std::uint64_t{model.out_channels});
  kv.set("static_transforms", std::string(static_transforms ? "1" : "0"));
  return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv, TrainConfig base) {
  TrainConfig c = std::move(base);
  for (const auto& [key, value] : kv.entries()) {
    if (key == "sigma_tilde") c.sigma_tilde = parse_double(value);
    else if (key == "mu") c.mu = parse_double(value);
    else if (key == "l_transforms") c.l_transforms = parse_uint(value);
    else if (key == "k_pred") c.k_pred = parse_uint(value);
    else if (key == "epochs") c.epochs = parse_uint(value);
    else if (key == "lr") c.lr = parse_double(value);
    else if (key == "batch") c.batch = parse_uint(value);
    else if (key == "seed") c.seed = parse_uint(value);
    else if (key == "levels") c.model.levels = nn::parse_levels(value);
    else if (key == "kernel") c.model.kernel = parse_uint(value);
    else if (key == "leaky_slope") c.model.leaky_slope = parse_double(value);
    else if (key == "in_channels") c.model.in_channels = parse_uint(value);
    else if (key == "out_channels") c.model.out_channels = parse_uint(value);
    else if (key == "static_transforms") {
      if (value != "0" && value != "1") throw std::invalid_argument("static_transforms must be 0 or 1");
      c.static_transforms = value == "1";
    } else if (key == "threads") c.threads = parse_uint(value);
    else throw std::invalid_argument("unknown config key '" + key + "'");
  }
  return c;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) { return from_kv(kv, TrainConfig{}); }

std::string TrainConfig::hash() const { return fnv1a_hex(to_kv().str()); }

nn::Tensor4 time_plane_concat(const Image& unit, double t) {
  require_unit(unit, "time_plane_concat");
  if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("time_plane_concat: t must be >= 0");
  nn::Tensor4 x(1, 2, unit.height(), unit.width());
  std::copy(unit.pixels().begin(), unit.pixels().end(), x.plane_ptr(0, 0));
  std::fill_n(x.plane_ptr(0, 1), x.plane(), t);
  return x;
}

Image transform_input(const Image& raw, double sigma_tilde, rng::Stream& stream) {
  if (!(sigma_tilde >= 0.0)) throw std::invalid_argument("transform_input: sigma_tilde must be >= 0");
  if (sigma_tilde == 0.0) return raw;
  return add_field(raw, gaussian_field(raw.size(), sigma_tilde, stream));
}

TransformedData::TransformedData(std::size_t l, std::size_t m, std::size_t n, std::vector<double> taus,
                                 std::vector<Image> inputs, std::vector<Image> targets)
    : l_(l), m_(m), n_(n), taus_(std::move(taus)), inputs_(std::move(inputs)), targets_(std::move(targets)) {
  if (taus_.size() != n_ || inputs_.size() != l_ * m_ || targets_.size() != l_ * m_ * n_) {
    throw std::invalid_argument("TransformedData: inconsistent sizes");
  }
  for (const auto& im : inputs_) require_unit(im, "TransformedData input");
  for (const auto& im : targets_) {
    require_unit(im, "TransformedData target");
    if (!im.same_shape(inputs_.front())) throw std::invalid_argument("TransformedData: shape mismatch");
  }
}

TransformedData make_transformed_data(std::span<const FrameSequence> noisy, std::span<const synth::TauEntry> taus,
                                      double sigma_tilde, std::size_t l_transforms, std::uint64_t seed,
                                      std::uint64_t draw) {
  if (noisy.empty()) throw std::invalid_argument("no training sequences");
  if (taus.empty()) throw std::invalid_argument("no tau values");
  const Image& ref = noisy.front()[0];
  for (const auto& seq : noisy) {
    if (!seq[0].same_shape(ref)) throw DataError("training sequences differ in frame shape");
    if (seq[0].domain() != PixelDomain::Raw255) throw std::invalid_argument("training frames must be raw255");
    for (const auto& e : taus) {
      if (e.frame >= seq.size()) {
        throw DataError("tau refers to frame " + std::to_string(e.frame) + " but a sequence has only " +
                        std::to_string(seq.size()) + " frames");
      }
    }
  }
  const std::size_t m = noisy.size();
  const std::size_t n = taus.size();
  std::vector<double> tau_values;
  for (const auto& e : taus) tau_values.push_back(e.tau);

  std::vector<Image> inputs;
  std::vector<Image> targets;
  inputs.reserve(l_transforms * m);
  targets.reserve(l_transforms * m * n);
  for (std::size_t k = 0; k < l_transforms; ++k) {
    rng::Stream s_in(seed, rng::Purpose::Transform, draw, 2 * k);
    rng::Stream s_out(seed, rng::Purpose::Transform, draw, 2 * k + 1);
    const auto eps = gaussian_field(ref.size(), sigma_tilde, s_in);
    const auto eps_prime = gaussian_field(ref.size(), sigma_tilde, s_out);
    for (std::size_t j = 0; j < m; ++j) {
      inputs.push_back(normalize(add_field(noisy[j][0], eps)));
      for (const auto& e : taus) targets.push_back(normalize(add_field(noisy[j][e.frame], eps_prime)));
    }
  }
  return TransformedData(l_transforms, m, n, std::move(tau_values), std::move(inputs), std::move(targets));
}

LossResult pair_loss(const nn::ModelSpec& spec, const nn::ParamStore& params, std::span<const PairTerm> terms,
                     std::size_t threads) {
  if (terms.empty()) throw std::invalid_argument("empty loss batch");
  const std::size_t count = terms.size();
  std::vector<double> values(count);
  std::vector<nn::ParamStore> grads(count);
  parallel_for(count, threads, [&](std::size_t b) {
    const PairTerm& term = terms[b];
    if (!term.input->same_shape(*term.target)) throw std::invalid_argument("input/target shape mismatch");
    require_unit(*term.target, "loss target");
    check_output(spec, *term.target);
    const auto fw = nn::forward(spec, params, time_plane_concat(*term.input, term.t));
    const auto target = term.target->pixels();
    const double pixels = static_cast<double>(target.size());
    values[b] = squared_error(fw.output, target) / pixels;
    grads[b] = nn::backward(spec, params, fw.tape,
                            output_grad(fw.output, target, 2.0 / (pixels * static_cast<double>(count))));
  });
  LossResult result{0.0, params.zeros_like()};
  for (std::size_t b = 0; b < count; ++b) {
    result.value += values[b];
    result.grad.add_scaled(grads[b]);
  }
  result.value /= static_cast<double>(count);
  return result;
}

LossResult loss_d(const nn::ModelSpec& spec, const nn::ParamStore& params, const TransformedData& data,
                  std::span<const LossItem> items, std::size_t threads) {
  std::vector<PairTerm> terms;
  terms.reserve(items.size());
  for (const auto& it : items) {
    if (it.k >= data.l() || it.j >= data.m() || it.i >= data.n()) throw std::out_of_range("loss item out of range");
    terms.push_back({&data.input(it.k, it.j), data.tau(it.i), &data.target(it.k, it.j, it.i)});
  }
  return pair_loss(spec, params, terms, threads);
}

LossResult loss_a(const nn::ModelSpec& spec, const nn::ParamStore& params, const TransformedData& data,
                  std::size_t k, std::size_t j, std::size_t chunk, std::size_t threads) {
  if (k >= data.l() || j >= data.m()) throw std::out_of_range("loss_a: (k, j) out of range");
  return averaging_term(spec, params, data, k, j, chunk, threads, true);
}

double averaging_weight(double mu, std::size_t l, std::size_t m, std::size_t n) {
  return mu / (static_cast<double>(l) * static_cast<double>(m) * static_cast<double>(n));
}

std::vector<LossItem> all_items(const TransformedData& data) {
  std::vector<LossItem> items;
  items.reserve(data.l() * data.m() * data.n());
  for (std::size_t k = 0; k < data.l(); ++k) {
    for (std::size_t j = 0; j < data.m(); ++j) {
      for (std::size_t i = 0; i < data.n(); ++i) items.push_back({k, j, i});
    }
  }
  return items;
}

LossResult total_loss(const nn::ModelSpec& spec, const nn::ParamStore& params, const TransformedData& data,
                      double mu, std::size_t threads) {
  if (!(mu >= 0.0)) throw std::invalid_argument("mu must be >= 0");
  const auto items = all_items(data);
  LossResult result = loss_d(spec, params, data, items, threads);
  if (mu == 0.0) return result;

  const double pairs = static_cast<double>(data.l() * data.m());
  double la = 0.0;
  nn::ParamStore ga = params.zeros_like();
  for (std::size_t k = 0; k < data.l(); ++k) {
    for (std::size_t j = 0; j < data.m(); ++j) {
      auto term = loss_a(spec, params, data, k, j, data.n(), threads);
      la += term.value;
      ga.add_scaled(term.grad);
    }
  }
  const double w = averaging_weight(mu, data.l(), data.m(), data.n());
  result.value += w * (la / pairs);
  result.grad.add_scaled(ga, w / pairs);
  return result;
}

std::vector<synth::TauEntry> training_taus(const FrameSequence& seq, std::uint64_t seed) {
  if (seq.size() < 2) throw DataError("training needs at least two frames");
  rng::Stream stream(seed, rng::Purpose::TauPermutation);
  auto taus = synth::sample_tau({seq.last_index(), 0.1}, stream);
  for (auto& e : taus) e.tau = seq.times()[e.frame];
  return taus;
}

TrainedModel train(const TrainConfig& config, std::span<const FrameSequence> noisy,
                   std::span<const synth::TauEntry> taus, const EpochCallback& on_epoch) {
  config.validate();
  if (noisy.empty()) throw std::invalid_argument("no training sequences");
  check_output(config.model, noisy.front()[0]);

  TrainedModel model{config.model, nn::init_params(config.model, config.seed), config.hash(), {}};
  nn::AdamState adam(model.params.size(), config.lr);
  std::optional<TransformedData> data;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (!config.static_transforms || !data) {
      data.emplace(make_transformed_data(noisy, taus, config.sigma_tilde, config.l_transforms, config.seed,
                                         config.static_transforms ? 0 : epoch));
    }
    auto items = all_items(*data);
    rng::Stream shuffle(config.seed, rng::Purpose::Shuffle, epoch);
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[shuffle.below(i)]);

    // Logged losses are running means over the epoch's steps.
    EpochLosses losses;
    for (std::size_t start = 0, b = 0; start < items.size(); start += config.batch, ++b) {
      const std::span<const LossItem> batch(items.data() + start, std::min(config.batch, items.size() - start));
      auto r = loss_d(model.spec, model.params, *data, batch, config.threads);
      if (!std::isfinite(r.value) || !grad_finite(r.grad)) {
        throw NumericError("non-finite L_D at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                           ", items " + describe_items(batch));
      }
      nn::adam_step(model.params, r.grad, adam);
      losses.loss_d += r.value * static_cast<double>(batch.size());
    }
    losses.loss_d /= static_cast<double>(items.size());

    const double w = averaging_weight(config.mu, data->l(), data->m(), data->n());
    for (std::size_t k = 0; k < data->l(); ++k) {
      for (std::size_t j = 0; j < data->m(); ++j) {
        const bool step = config.mu > 0.0;
        auto r = averaging_term(model.spec, model.params, *data, k, j, config.batch, config.threads, step);
        if (!std::isfinite(r.value) || (step && !grad_finite(r.grad))) {
          throw NumericError("non-finite L_A at epoch " + std::to_string(epoch) + ", (k=" + std::to_string(k) +
                             ",j=" + std::to_string(j) + ")");
        }
        if (step) {
          r.grad.scale(w);
          nn::adam_step(model.params, r.grad, adam);
        }
        losses.loss_a += r.value;
      }
    }
    losses.loss_a /= static_cast<double>(data->l() * data->m());
    losses.loss_t = losses.loss_d + w * losses.loss_a;
    model.history.push_back(losses);
    if (on_epoch) on_epoch(epoch, losses);
  }
  return model;
}

Image predict(const nn::ModelSpec& spec, const nn::ParamStore& params, std::span<const Image> y0_frames,
              double sigma_tilde, std::size_t k, std::uint64_t seed, std::size_t threads) {
  if (k == 0) throw std::invalid_argument("predict: K must be >= 1");
  if (y0_frames.empty()) throw std::invalid_argument("predict: no input frames");
  if (!(sigma_tilde >= 0.0)) throw std::invalid_argument("predict: sigma_tilde must be >= 0");
  const Image& ref = y0_frames.front();
  for (const auto& f : y0_frames) {
    if (!f.same_shape(ref)) throw DataError("predict: input frames differ in shape");
    if (f.domain() != PixelDomain::Raw255) throw std::invalid_argument("predict: inputs must be raw255");
  }
  check_output(spec, ref);

  const std::size_t members = sigma_tilde == 0.0 ? 1 : k;
  std::vector<std::vector<double>> sums(members);
  parallel_for(members, threads, [&](std::size_t i) {
    rng::Stream stream(seed, rng::Purpose::Prediction, i);
    const auto eps = gaussian_field(ref.size(), sigma_tilde, stream);
    std::vector<double> acc(ref.size(), 0.0);
    for (const auto& y0 : y0_frames) {
      const auto out = nn::predict(spec, params, time_plane_concat(normalize(add_field(y0, eps)), 0.0));
      for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += out.data()[p];
    }
    sums[i] = std::move(acc);
  });
  std::vector<double> mean(ref.size(), 0.0);
  for (const auto& s : sums) {
    for (std::size_t p = 0; p < mean.size(); ++p) mean[p] += s[p];
  }
  const double denom = static_cast<double>(members) * static_cast<double>(y0_frames.size());
  for (auto& v : mean) {
    v /= denom;
    if (!std::isfinite(v)) throw NumericError("predict: non-finite model output");
  }
  return Image(ref.height(), ref.width(), std::move(mean), PixelDomain::Unit);
}

double empirical_risk(const nn::ModelSpec& spec, const nn::ParamStore& params, std::span<const FrameSequence> noisy,
                      std::span<const synth::TauEntry> taus, std::size_t threads) {
  const auto data = make_transformed_data(noisy, taus, 0.0, 1, 0, 0);
  return loss_d(spec, params, data, all_items(data), threads).value;
}

}  // namespace dn2n
