#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace dn2n {

/// Intensity scale of an image. Raw255 values are nominally in [0,255] but may
/// leave that range after noise is added; Unit values are nominally in [0,1].
enum class PixelDomain { Raw255, Unit };

std::string_view to_string(PixelDomain domain);

/// Dense single-channel raster, row-major. Immutable once constructed.
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, PixelDomain domain, double fill = 0.0);
  /// Throws std::invalid_argument if the pixel count does not match or any value is non-finite.
  Image(std::size_t height, std::size_t width, std::vector<double> pixels, PixelDomain domain);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return pixels_.size(); }
  PixelDomain domain() const { return domain_; }
  std::span<const double> pixels() const { return pixels_; }
  double at(std::size_t row, std::size_t col) const { return pixels_[row * width_ + col]; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  PixelDomain domain_ = PixelDomain::Raw255;
  std::vector<double> pixels_;
};

/// Frames of one acquisition, frame i observed at times[i].
class FrameSequence {
 public:
  FrameSequence() = default;
  /// Requires equal shape and domain across frames, times[0] == 0 and strictly increasing times.
  FrameSequence(std::vector<Image> frames, std::vector<double> times);

  /// Frames observed at t_i = i * step.
  static FrameSequence uniform(std::vector<Image> frames, double step = 0.1);

  std::size_t size() const { return frames_.size(); }
  /// Index of the last frame (the N of an N+1 frame sequence).
  std::size_t last_index() const { return frames_.size() - 1; }
  const Image& operator[](std::size_t i) const { return frames_[i]; }
  const std::vector<Image>& frames() const { return frames_; }
  const std::vector<double>& times() const { return times_; }

 private:
  std::vector<Image> frames_;
  std::vector<double> times_;
};

/// Pixel-wise division by 255. Requires a Raw255 image.
Image normalize(const Image& raw);
/// Pixel-wise multiplication by 255, clamped to [0,255] when `clamp` is set. Requires a Unit image.
Image denormalize(const Image& unit, bool clamp);

/// Returns `im` in the Unit domain, normalizing only if it is Raw255.
Image as_unit(const Image& im);

}  // namespace dn2n
