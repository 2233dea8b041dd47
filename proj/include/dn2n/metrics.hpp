#pragma once

#include <cstddef>
#include <limits>

#include "dn2n/image.hpp"

namespace dn2n {

/// Value returned by psnr() when the two images are identical.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double mse(const Image& reference, const Image& test);

/// 10*log10(data_range^2 / MSE); kPsnrIdentical (+inf) when MSE is zero.
double psnr(const Image& reference, const Image& test, double data_range);

struct SsimOptions {
  std::size_t window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over all fully contained windows using a uniform window and
/// sample (N-1) covariance normalization.
double ssim(const Image& reference, const Image& test, double data_range,
            const SsimOptions& options = {});

}  // namespace dn2n
