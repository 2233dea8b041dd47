#include "dn2n/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dn2n/rng.hpp"

namespace dn2n::nn {

void ModelSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw std::invalid_argument("ModelSpec: zero channels");
  if (levels.empty()) throw std::invalid_argument("ModelSpec: at least one level required");
  for (std::size_t w : levels) {
    if (w == 0) throw std::invalid_argument("ModelSpec: level widths must be positive");
  }
  if (kernel == 0 || kernel % 2 == 0) throw std::invalid_argument("ModelSpec: kernel must be odd");
  if (!(leaky_slope >= 0.0) || !std::isfinite(leaky_slope)) {
    throw std::invalid_argument("ModelSpec: invalid leaky slope");
  }
  if (levels.size() > 16) throw std::invalid_argument("ModelSpec: too many levels");
}

std::string ModelSpec::describe() const {
  std::ostringstream os;
  os << "in=" << in_channels << " out=" << out_channels << " levels=" << format_levels(levels)
     << " kernel=" << kernel << " slope=" << leaky_slope;
  return os.str();
}

std::vector<std::size_t> parse_levels(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    const unsigned long v = std::stoul(item, &pos);
    if (pos != item.size() || v == 0) throw std::invalid_argument("bad level width: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty level list");
  return out;
}

std::string format_levels(const std::vector<std::size_t>& levels) {
  std::string out;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(levels[i]);
  }
  return out;
}

void ParamStore::add(std::string name, std::vector<std::size_t> shape) {
  std::size_t size = 1;
  for (std::size_t d : shape) size *= d;
  entries_.push_back({std::move(name), std::move(shape), values_.size(), size});
  values_.resize(values_.size() + size, 0.0);
}

std::size_t ParamStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  out.entries_ = entries_;
  out.values_.assign(values_.size(), 0.0);
  return out;
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name || entries_[i].shape != other.entries_[i].shape) {
      return false;
    }
  }
  return true;
}

void ParamStore::add_scaled(const ParamStore& other, double scale) {
  if (!same_layout(other)) throw std::invalid_argument("ParamStore: layout mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
}

void ParamStore::scale(double factor) {
  for (double& v : values_) v *= factor;
}

namespace {

std::string enc_name(std::size_t l, const char* layer) {
  return "enc" + std::to_string(l) + "." + layer;
}
std::string dec_name(std::size_t l, const char* layer) {
  return "dec" + std::to_string(l) + "." + layer;
}

void add_conv(ParamStore& ps, const std::string& prefix, std::size_t out, std::size_t in, std::size_t k) {
  ps.add(prefix + ".weight", {out, in, k, k});
  ps.add(prefix + ".bias", {out});
}

// Parameter entry indices of one convolution.
struct ConvRef {
  std::size_t weight;
  std::size_t bias;
  std::size_t out_channels;
  std::size_t kernel;
};

// Resolves every convolution of the family once, in canonical order.
struct Layout {
  std::vector<ConvRef> enc1, enc2;
  std::vector<ConvRef> up, dec1, dec2;  // indexed by decoder level
  ConvRef head{};

  explicit Layout(const ModelSpec& spec) {
    const std::size_t nl = spec.levels.size();
    std::size_t e = 0;
    for (std::size_t l = 0; l < nl; ++l) {
      enc1.push_back({e, e + 1, spec.levels[l], spec.kernel});
      enc2.push_back({e + 2, e + 3, spec.levels[l], spec.kernel});
      e += 4;
    }
    up.resize(nl > 0 ? nl - 1 : 0);
    dec1.resize(up.size());
    dec2.resize(up.size());
    for (std::size_t l = nl - 1; l-- > 0;) {
      up[l] = {e, e + 1, spec.levels[l], spec.kernel};
      dec1[l] = {e + 2, e + 3, spec.levels[l], spec.kernel};
      dec2[l] = {e + 4, e + 5, spec.levels[l], spec.kernel};
      e += 6;
    }
    head = {e, e + 1, spec.out_channels, 1};
  }
};

Tensor4 conv_act(const ParamStore& ps, const ConvRef& c, const Tensor4& x, double slope) {
  Tensor4 y = conv2d(x, ps.view(c.weight), ps.view(c.bias), c.out_channels, c.kernel);
  leaky_relu_inplace(y, slope);
  return y;
}

// Back-propagates through act(conv(x)) given the stored activated output.
Tensor4 conv_act_backward(const ParamStore& ps, ParamStore& grads, const ConvRef& c,
                          const Tensor4& x, const Tensor4& activated, Tensor4 dy, double slope,
                          bool need_dx) {
  leaky_relu_backward_inplace(activated, dy, slope);
  Tensor4 dx;
  conv2d_backward(x, dy, ps.view(c.weight), c.kernel, grads.view(c.weight), grads.view(c.bias),
                  need_dx ? &dx : nullptr);
  return dx;
}

void check_input(const ModelSpec& spec, const ParamStore& params, const Tensor4& input) {
  spec.validate();
  if (input.c() != spec.in_channels) {
    throw std::invalid_argument("forward: input has " + std::to_string(input.c()) +
                                " channels, model expects " + std::to_string(spec.in_channels));
  }
  const std::size_t m = spec.spatial_multiple();
  if (input.n() == 0 || input.h() == 0 || input.w() == 0 || input.h() % m != 0 || input.w() % m != 0) {
    throw std::invalid_argument("forward: spatial size " + std::to_string(input.h()) + "x" +
                                std::to_string(input.w()) + " not a positive multiple of " +
                                std::to_string(m));
  }
  if (params.size() != parameter_count(spec)) {
    throw std::invalid_argument("forward: parameter store does not match the model spec");
  }
}

Tensor4 run_forward(const ModelSpec& spec, const ParamStore& ps, const Tensor4& input, Tape* tape) {
  check_input(spec, ps, input);
  const Layout lay(spec);
  const std::size_t nl = spec.levels.size();
  const double slope = spec.leaky_slope;
  std::vector<Tensor4> skips(nl);
  if (tape) {
    tape->input = input;
    tape->enc_in.resize(nl);
    tape->enc_mid.resize(nl);
    tape->up_in.resize(nl - 1);
    tape->up_out.resize(nl - 1);
    tape->cat.resize(nl - 1);
    tape->dec_mid.resize(nl - 1);
    tape->dec_out.resize(nl - 1);
  }
  for (std::size_t l = 0; l < nl; ++l) {
    Tensor4 in = l == 0 ? input : avg_pool2(skips[l - 1]);
    Tensor4 mid = conv_act(ps, lay.enc1[l], in, slope);
    skips[l] = conv_act(ps, lay.enc2[l], mid, slope);
    if (tape) {
      tape->enc_in[l] = std::move(in);
      tape->enc_mid[l] = std::move(mid);
    }
  }
  Tensor4 h = skips[nl - 1];
  for (std::size_t l = nl - 1; l-- > 0;) {
    Tensor4 up_in = upsample2(h);
    Tensor4 up_out = conv_act(ps, lay.up[l], up_in, slope);
    Tensor4 cat = concat_channels(up_out, skips[l]);
    Tensor4 mid = conv_act(ps, lay.dec1[l], cat, slope);
    h = conv_act(ps, lay.dec2[l], mid, slope);
    if (tape) {
      tape->up_in[l] = std::move(up_in);
      tape->up_out[l] = std::move(up_out);
      tape->cat[l] = std::move(cat);
      tape->dec_mid[l] = std::move(mid);
      tape->dec_out[l] = h;
    }
  }
  Tensor4 out = conv2d(h, ps.view(lay.head.weight), ps.view(lay.head.bias), spec.out_channels, 1);
  if (tape) {
    tape->enc_out = std::move(skips);
    tape->head_in = std::move(h);
  }
  return out;
}

}  // namespace

ParamStore make_param_layout(const ModelSpec& spec) {
  spec.validate();
  ParamStore ps;
  const std::size_t nl = spec.levels.size();
  const std::size_t k = spec.kernel;
  for (std::size_t l = 0; l < nl; ++l) {
    const std::size_t in = l == 0 ? spec.in_channels : spec.levels[l - 1];
    add_conv(ps, enc_name(l, "conv1"), spec.levels[l], in, k);
    add_conv(ps, enc_name(l, "conv2"), spec.levels[l], spec.levels[l], k);
  }
  for (std::size_t l = nl - 1; l-- > 0;) {
    add_conv(ps, dec_name(l, "up"), spec.levels[l], spec.levels[l + 1], k);
    add_conv(ps, dec_name(l, "conv1"), spec.levels[l], 2 * spec.levels[l], k);
    add_conv(ps, dec_name(l, "conv2"), spec.levels[l], spec.levels[l], k);
  }
  add_conv(ps, "head", spec.out_channels, spec.levels[0], 1);
  return ps;
}

ParamStore init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamStore ps = make_param_layout(spec);
  const auto& entries = ps.entries();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const auto& shape = entries[e].shape;
    if (shape.size() != 4) continue;  // biases stay zero
    const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
    const double fan_out = static_cast<double>(shape[0] * shape[2] * shape[3]);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    rng::Stream stream(seed, rng::Purpose::ParamInit, e);
    for (double& v : ps.view(e)) v = (2.0 * stream.uniform() - 1.0) * bound;
  }
  return ps;
}

std::size_t parameter_count(const ModelSpec& spec) { return make_param_layout(spec).size(); }

std::vector<bool> Tape::activation_signs() const {
  std::vector<bool> signs;
  auto push = [&](const std::vector<Tensor4>& ts) {
    for (const Tensor4& t : ts) {
      for (double v : t.values()) signs.push_back(v > 0.0);
    }
  };
  push(enc_mid);
  push(enc_out);
  push(up_out);
  push(dec_mid);
  push(dec_out);
  return signs;
}

ForwardResult forward(const ModelSpec& spec, const ParamStore& params, const Tensor4& input) {
  ForwardResult r;
  r.output = run_forward(spec, params, input, &r.tape);
  return r;
}

Tensor4 predict(const ModelSpec& spec, const ParamStore& params, const Tensor4& input) {
  return run_forward(spec, params, input, nullptr);
}

ParamStore backward(const ModelSpec& spec, const ParamStore& ps, const Tape& tape,
                    const Tensor4& output_grad) {
  const std::size_t nl = spec.levels.size();
  if (tape.enc_out.size() != nl || tape.enc_in.size() != nl) {
    throw std::invalid_argument("backward: tape does not match the model spec");
  }
  const Tensor4& head_in = tape.head_in;
  if (output_grad.n() != head_in.n() || output_grad.c() != spec.out_channels ||
      output_grad.h() != head_in.h() || output_grad.w() != head_in.w()) {
    throw std::invalid_argument("backward: output gradient shape mismatch");
  }
  const Layout lay(spec);
  const double slope = spec.leaky_slope;
  ParamStore grads = ps.zeros_like();

  Tensor4 dh;
  conv2d_backward(head_in, output_grad, ps.view(lay.head.weight), 1, grads.view(lay.head.weight),
                  grads.view(lay.head.bias), &dh);

  std::vector<Tensor4> skip_grad(nl);
  for (std::size_t l = 0; l + 1 < nl; ++l) {
    Tensor4 dmid = conv_act_backward(ps, grads, lay.dec2[l], tape.dec_mid[l], tape.dec_out[l],
                                     std::move(dh), slope, true);
    Tensor4 dcat = conv_act_backward(ps, grads, lay.dec1[l], tape.cat[l], tape.dec_mid[l],
                                     std::move(dmid), slope, true);
    Tensor4 dup, dskip;
    split_channels(dcat, spec.levels[l], dup, dskip);
    skip_grad[l] = std::move(dskip);
    Tensor4 dup_in = conv_act_backward(ps, grads, lay.up[l], tape.up_in[l], tape.up_out[l],
                                       std::move(dup), slope, true);
    dh = upsample2_backward(dup_in);
  }
  // dh now holds the gradient of the bottom encoder output.
  for (std::size_t l = nl; l-- > 0;) {
    Tensor4 dout = std::move(dh);
    if (l + 1 < nl) {
      auto a = dout.values();
      auto b = skip_grad[l].values();
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    }
    Tensor4 dmid = conv_act_backward(ps, grads, lay.enc2[l], tape.enc_mid[l], tape.enc_out[l],
                                     std::move(dout), slope, true);
    Tensor4 din = conv_act_backward(ps, grads, lay.enc1[l], tape.enc_in[l], tape.enc_mid[l],
                                    std::move(dmid), slope, l > 0);
    if (l > 0) dh = avg_pool2_backward(din);
  }
  return grads;
}

}  // namespace dn2n::nn
