#include "dn2n/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dn2n {

std::string_view to_string(PixelDomain domain) {
  return domain == PixelDomain::Raw255 ? "raw255" : "unit";
}

Image::Image(std::size_t height, std::size_t width, PixelDomain domain, double fill)
    : height_(height), width_(width), domain_(domain), pixels_(height * width, fill) {
  if (!std::isfinite(fill)) throw std::invalid_argument("Image: non-finite fill value");
}

Image::Image(std::size_t height, std::size_t width, std::vector<double> pixels, PixelDomain domain)
    : height_(height), width_(width), domain_(domain), pixels_(std::move(pixels)) {
  if (pixels_.size() != height * width) {
    throw std::invalid_argument("Image: expected " + std::to_string(height * width) +
                                " pixels, got " + std::to_string(pixels_.size()));
  }
  if (!std::all_of(pixels_.begin(), pixels_.end(), [](double v) { return std::isfinite(v); })) {
    throw std::invalid_argument("Image: non-finite pixel value");
  }
}

FrameSequence::FrameSequence(std::vector<Image> frames, std::vector<double> times)
    : frames_(std::move(frames)), times_(std::move(times)) {
  if (frames_.empty()) throw std::invalid_argument("FrameSequence: no frames");
  if (frames_.size() != times_.size()) {
    throw std::invalid_argument("FrameSequence: frame/time count mismatch");
  }
  for (const Image& f : frames_) {
    if (!f.same_shape(frames_.front()) || f.domain() != frames_.front().domain()) {
      throw std::invalid_argument("FrameSequence: frames differ in shape or domain");
    }
  }
  if (times_.front() != 0.0) throw std::invalid_argument("FrameSequence: times[0] must be 0");
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) {
      throw std::invalid_argument("FrameSequence: times must be strictly increasing");
    }
  }
}

FrameSequence FrameSequence::uniform(std::vector<Image> frames, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("FrameSequence: time step must be positive");
  // i / 10 rather than i * 0.1 so that the times are the correctly rounded decimals.
  const double per_unit = 1.0 / step;
  const bool exact = per_unit == std::round(per_unit);
  std::vector<double> times(frames.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    times[i] = exact ? static_cast<double>(i) / per_unit : static_cast<double>(i) * step;
  }
  return FrameSequence(std::move(frames), std::move(times));
}

Image normalize(const Image& raw) {
  if (raw.domain() != PixelDomain::Raw255) {
    throw std::invalid_argument("normalize: expected a raw255 image");
  }
  std::vector<double> out(raw.pixels().begin(), raw.pixels().end());
  for (double& v : out) v /= 255.0;
  return Image(raw.height(), raw.width(), std::move(out), PixelDomain::Unit);
}

Image denormalize(const Image& unit, bool clamp) {
  if (unit.domain() != PixelDomain::Unit) {
    throw std::invalid_argument("denormalize: expected a unit image");
  }
  std::vector<double> out(unit.pixels().begin(), unit.pixels().end());
  for (double& v : out) {
    v *= 255.0;
    if (clamp) v = std::clamp(v, 0.0, 255.0);
  }
  return Image(unit.height(), unit.width(), std::move(out), PixelDomain::Raw255);
}

Image as_unit(const Image& im) {
  return im.domain() == PixelDomain::Unit ? im : normalize(im);
}

}  // namespace dn2n
