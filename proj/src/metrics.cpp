#include "dn2n/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace dn2n {
namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b) || a.size() == 0) {
    throw std::invalid_argument(std::string(what) + ": images differ in shape or are empty");
  }
}

}  // namespace

double mse(const Image& reference, const Image& test) {
  require_same_shape(reference, test, "mse");
  auto r = reference.pixels();
  auto t = test.pixels();
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double d = r[i] - t[i];
    acc += d * d;
  }
  return acc / static_cast<double>(r.size());
}

double psnr(const Image& reference, const Image& test, double data_range) {
  if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range must be positive");
  const double err = mse(reference, test);
  if (err == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(data_range * data_range / err);
}

double ssim(const Image& reference, const Image& test, double data_range,
            const SsimOptions& options) {
  require_same_shape(reference, test, "ssim");
  const std::size_t win = options.window;
  if (win % 2 == 0 || win < 3) throw std::invalid_argument("ssim: window must be odd and >= 3");
  const std::size_t h = reference.height();
  const std::size_t w = reference.width();
  if (win > h || win > w) throw std::invalid_argument("ssim: window larger than image");
  if (!(data_range > 0.0)) throw std::invalid_argument("ssim: data_range must be positive");

  const double c1 = (options.k1 * data_range) * (options.k1 * data_range);
  const double c2 = (options.k2 * data_range) * (options.k2 * data_range);
  const double np = static_cast<double>(win * win);
  const double cov_norm = np / (np - 1.0);

  auto x = reference.pixels();
  auto y = test.pixels();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r0 = 0; r0 + win <= h; ++r0) {
    for (std::size_t c0 = 0; c0 + win <= w; ++c0) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t r = r0; r < r0 + win; ++r) {
        const double* px = x.data() + r * w + c0;
        const double* py = y.data() + r * w + c0;
        for (std::size_t c = 0; c < win; ++c) {
          sx += px[c];
          sy += py[c];
          sxx += px[c] * px[c];
          syy += py[c] * py[c];
          sxy += px[c] * py[c];
        }
      }
      const double ux = sx / np, uy = sy / np;
      const double vx = cov_norm * (sxx / np - ux * ux);
      const double vy = cov_norm * (syy / np - uy * uy);
      const double vxy = cov_norm * (sxy / np - ux * uy);
      const double num = (2.0 * ux * uy + c1) * (2.0 * vxy + c2);
      const double den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace dn2n
