#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dn2n/image.hpp"
#include "dn2n/rng.hpp"

namespace dn2n::test {

inline Image random_image(std::size_t h, std::size_t w, std::uint64_t seed, double lo = 0.0, double hi = 255.0,
                          PixelDomain domain = PixelDomain::Raw255) {
  rng::Stream s(seed, rng::Purpose::Test, h, w);
  std::vector<double> px(h * w);
  for (auto& v : px) v = lo + (hi - lo) * s.uniform();
  return Image(h, w, std::move(px), domain);
}

inline Image constant_image(std::size_t h, std::size_t w, double v, PixelDomain domain = PixelDomain::Raw255) {
  return Image(h, w, domain, v);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dn2n_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // unbiased
};

inline Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(xs.size() - 1);
  return m;
}

}  // namespace dn2n::test
