#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dn2n/tensor.hpp"

namespace dn2n::nn {

/// Encoder-decoder with skip connections. Each level applies two k x k
/// convolutions with a leaky rectifier; levels are joined by 2x2 average
/// pooling on the way down and nearest-neighbour x2 upsampling plus a k x k
/// convolution on the way up, where the upsampled features are concatenated
/// with the encoder features of the same level. A final 1x1 convolution maps
/// to out_channels without an output activation.
struct ModelSpec {
  std::size_t in_channels = 2;  // image channels plus the time plane
  std::size_t out_channels = 1;
  std::vector<std::size_t> levels{16, 32, 64};
  std::size_t kernel = 3;
  double leaky_slope = 0.1;

  /// Throws std::invalid_argument on an unusable spec.
  void validate() const;
  /// Spatial sizes must be multiples of this.
  std::size_t spatial_multiple() const { return std::size_t{1} << (levels.size() - 1); }
  std::string describe() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Parses "16,32,64" into level widths.
std::vector<std::size_t> parse_levels(const std::string& text);
std::string format_levels(const std::vector<std::size_t>& levels);

struct ParamEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;

  friend bool operator==(const ParamEntry&, const ParamEntry&) = default;
};

/// Named parameter tensors in one flat buffer, in a fixed order. Also used as
/// the gradient store (same layout, values are derivatives).
class ParamStore {
 public:
  ParamStore() = default;

  void add(std::string name, std::vector<std::size_t> shape);
  std::size_t index_of(const std::string& name) const;
  const std::vector<ParamEntry>& entries() const { return entries_; }

  std::span<double> view(std::size_t entry) {
    return {values_.data() + entries_[entry].offset, entries_[entry].size};
  }
  std::span<const double> view(std::size_t entry) const {
    return {values_.data() + entries_[entry].offset, entries_[entry].size};
  }
  std::span<double> view(const std::string& name) { return view(index_of(name)); }
  std::span<const double> view(const std::string& name) const { return view(index_of(name)); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  /// Same layout, all values zero.
  ParamStore zeros_like() const;
  bool same_layout(const ParamStore& other) const;
  /// this += scale * other (layouts must match).
  void add_scaled(const ParamStore& other, double scale = 1.0);
  void scale(double factor);

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<ParamEntry> entries_;
  std::vector<double> values_;
};

/// Zero-valued parameters in the canonical order for `spec`.
ParamStore make_param_layout(const ModelSpec& spec);
/// Weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
ParamStore init_params(const ModelSpec& spec, std::uint64_t seed);

/// Activations kept by forward() for the reverse pass.
struct Tape {
  Tensor4 input;
  std::vector<Tensor4> enc_in, enc_mid, enc_out;
  std::vector<Tensor4> up_in, up_out, cat, dec_mid, dec_out;
  Tensor4 head_in;

  /// Sign pattern of every rectified activation; changes iff some unit crossed
  /// the rectifier kink.
  std::vector<bool> activation_signs() const;
};

struct ForwardResult {
  Tensor4 output;
  Tape tape;
};

ForwardResult forward(const ModelSpec& spec, const ParamStore& params, const Tensor4& input);
/// Forward pass without retaining activations.
Tensor4 predict(const ModelSpec& spec, const ParamStore& params, const Tensor4& input);

/// Exact reverse-mode gradient of <output_grad, output> w.r.t. all parameters.
ParamStore backward(const ModelSpec& spec, const ParamStore& params, const Tape& tape,
                    const Tensor4& output_grad);

std::size_t parameter_count(const ModelSpec& spec);

}  // namespace dn2n::nn
