#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dn2n::nn {

/// Contiguous (batch, channels, height, width) array of doubles.
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : n_(n), c_(c), h_(h), w_(w), data_(n * c * h * w, fill) {}

  std::size_t n() const { return n_; }
  std::size_t c() const { return c_; }
  std::size_t h() const { return h_; }
  std::size_t w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return h_ * w_; }

  bool same_dims(const Tensor4& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  /// Pointer to channel plane (b, ch).
  double* plane_ptr(std::size_t b, std::size_t ch) { return data_.data() + (b * c_ + ch) * plane(); }
  const double* plane_ptr(std::size_t b, std::size_t ch) const {
    return data_.data() + (b * c_ + ch) * plane();
  }

  double& at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) {
    return data_[((b * c_ + ch) * h_ + y) * w_ + x];
  }
  double at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const {
    return data_[((b * c_ + ch) * h_ + y) * w_ + x];
  }

  bool all_finite() const;

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  std::size_t n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

// Layer primitives used by the encoder-decoder. Convolutions use stride 1 and
// zero padding kernel/2; weights are laid out [out][in][ky][kx].

Tensor4 conv2d(const Tensor4& x, std::span<const double> weight, std::span<const double> bias,
               std::size_t out_channels, std::size_t kernel);
/// Accumulates into dweight/dbias; writes the input gradient to *dx when dx is non-null.
void conv2d_backward(const Tensor4& x, const Tensor4& dy, std::span<const double> weight,
                     std::size_t kernel, std::span<double> dweight, std::span<double> dbias,
                     Tensor4* dx);

void leaky_relu_inplace(Tensor4& t, double slope);
/// Multiplies dy by the activation slope wherever the stored activation output is not positive.
void leaky_relu_backward_inplace(const Tensor4& activated, Tensor4& dy, double slope);

Tensor4 avg_pool2(const Tensor4& x);
Tensor4 avg_pool2_backward(const Tensor4& dy);
Tensor4 upsample2(const Tensor4& x);
Tensor4 upsample2_backward(const Tensor4& dy);

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b);
/// Splits along channels into the first `first_channels` and the rest.
void split_channels(const Tensor4& t, std::size_t first_channels, Tensor4& a, Tensor4& b);

}  // namespace dn2n::nn
