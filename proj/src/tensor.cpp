#include "dn2n/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "dn2n/parallel.hpp"

namespace dn2n {

std::size_t threads_from_env() {
  if (const char* env = std::getenv("DN2N_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

}  // namespace dn2n

namespace dn2n::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

using Stride = Eigen::OuterStride<>;
using StridedMat = Eigen::Map<RowMat, 0, Stride>;
using ConstStridedMat = Eigen::Map<const RowMat, 0, Stride>;

// Column matrix for output rows [y0, y1): row (ci, ky, kx) holds input plane ci
// shifted by (ky - pad, kx - pad), zero outside the image.
void im2col_rows(const double* x, std::size_t cin, std::size_t h, std::size_t w, std::size_t k,
                 std::size_t y0, std::size_t y1, double* cols) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t p = h * w;
  const std::size_t tp = (y1 - y0) * w;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const double* src = x + ci * p;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* dst = cols + ((ci * k + ky) * k + kx) * tp;
        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::size_t x0 = ox < 0 ? static_cast<std::size_t>(-ox) : 0;
        const std::size_t x1 = ox > 0 ? w - static_cast<std::size_t>(ox) : w;
        for (std::size_t y = y0; y < y1; ++y) {
          double* row = dst + (y - y0) * w;
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + oy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
            std::memset(row, 0, w * sizeof(double));
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(sy) * w;
          for (std::size_t xx = 0; xx < x0; ++xx) row[xx] = 0.0;
          std::memcpy(row + x0, srow + static_cast<std::ptrdiff_t>(x0) + ox, (x1 - x0) * sizeof(double));
          for (std::size_t xx = x1; xx < w; ++xx) row[xx] = 0.0;
        }
      }
    }
  }
}

void col2im_rows_add(const double* cols, std::size_t cin, std::size_t h, std::size_t w,
                     std::size_t k, std::size_t y0, std::size_t y1, double* dx) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t p = h * w;
  const std::size_t tp = (y1 - y0) * w;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    double* dst = dx + ci * p;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* src = cols + ((ci * k + ky) * k + kx) * tp;
        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::size_t x0 = ox < 0 ? static_cast<std::size_t>(-ox) : 0;
        const std::size_t x1 = ox > 0 ? w - static_cast<std::size_t>(ox) : w;
        for (std::size_t y = y0; y < y1; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + oy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          const double* row = src + (y - y0) * w;
          double* drow = dst + static_cast<std::size_t>(sy) * w;
          for (std::size_t xx = x0; xx < x1; ++xx) {
            drow[static_cast<std::ptrdiff_t>(xx) + ox] += row[xx];
          }
        }
      }
    }
  }
}

// Rows per tile so that one column tile stays around 256 KiB.
std::size_t tile_rows(std::size_t kk, std::size_t w, std::size_t h) {
  const std::size_t target = (std::size_t{1} << 15) / std::max<std::size_t>(kk, 1);
  return std::clamp<std::size_t>(target / std::max<std::size_t>(w, 1), 1, h);
}

}  // namespace

bool Tensor4::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor4 conv2d(const Tensor4& x, std::span<const double> weight, std::span<const double> bias,
               std::size_t out_channels, std::size_t kernel) {
  const std::size_t kk = x.c() * kernel * kernel;
  if (weight.size() != out_channels * kk || bias.size() != out_channels) {
    throw std::invalid_argument("conv2d: parameter shape does not match input channels");
  }
  const std::size_t p = x.plane();
  Tensor4 y(x.n(), out_channels, x.h(), x.w());
  ConstMapMat wm(weight.data(), out_channels, kk);
  if (kernel == 1) {
    for (std::size_t b = 0; b < x.n(); ++b) {
      MapMat ym(y.plane_ptr(b, 0), out_channels, p);
      ym.noalias() = wm * ConstMapMat(x.plane_ptr(b, 0), kk, p);
      for (std::size_t o = 0; o < out_channels; ++o) ym.row(o).array() += bias[o];
    }
    return y;
  }
  const std::size_t rows = tile_rows(kk, x.w(), x.h());
  std::vector<double> cols(kk * rows * x.w());
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t y0 = 0; y0 < x.h(); y0 += rows) {
      const std::size_t y1 = std::min(x.h(), y0 + rows);
      const std::size_t tp = (y1 - y0) * x.w();
      im2col_rows(x.plane_ptr(b, 0), x.c(), x.h(), x.w(), kernel, y0, y1, cols.data());
      StridedMat ym(y.plane_ptr(b, 0) + y0 * x.w(), out_channels, tp, Stride(p));
      ym.noalias() = wm * ConstMapMat(cols.data(), kk, tp);
      for (std::size_t o = 0; o < out_channels; ++o) ym.row(o).array() += bias[o];
    }
  }
  return y;
}

void conv2d_backward(const Tensor4& x, const Tensor4& dy, std::span<const double> weight,
                     std::size_t kernel, std::span<double> dweight, std::span<double> dbias,
                     Tensor4* dx) {
  const std::size_t out_channels = dy.c();
  const std::size_t kk = x.c() * kernel * kernel;
  const std::size_t p = x.plane();
  if (dy.n() != x.n() || dy.h() != x.h() || dy.w() != x.w() || weight.size() != out_channels * kk ||
      dweight.size() != weight.size() || dbias.size() != out_channels) {
    throw std::invalid_argument("conv2d_backward: shape mismatch");
  }
  ConstMapMat wm(weight.data(), out_channels, kk);
  MapMat dwm(dweight.data(), out_channels, kk);
  if (dx) *dx = Tensor4(x.n(), x.c(), x.h(), x.w());
  for (std::size_t b = 0; b < x.n(); ++b) {
    // Plain loop: a vectorized sum peels by address alignment, so its rounding would vary between calls.
    for (std::size_t o = 0; o < out_channels; ++o) {
      const double* row = dy.plane_ptr(b, o);
      dbias[o] += std::accumulate(row, row + p, 0.0);
    }
  }
  if (kernel == 1) {
    for (std::size_t b = 0; b < x.n(); ++b) {
      ConstMapMat dym(dy.plane_ptr(b, 0), out_channels, p);
      dwm.noalias() += dym * ConstMapMat(x.plane_ptr(b, 0), kk, p).transpose();
      if (dx) MapMat(dx->plane_ptr(b, 0), kk, p).noalias() = wm.transpose() * dym;
    }
    return;
  }
  const std::size_t rows = tile_rows(kk, x.w(), x.h());
  std::vector<double> cols(kk * rows * x.w());
  std::vector<double> dcols(dx ? cols.size() : 0);
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t y0 = 0; y0 < x.h(); y0 += rows) {
      const std::size_t y1 = std::min(x.h(), y0 + rows);
      const std::size_t tp = (y1 - y0) * x.w();
      im2col_rows(x.plane_ptr(b, 0), x.c(), x.h(), x.w(), kernel, y0, y1, cols.data());
      ConstStridedMat dym(dy.plane_ptr(b, 0) + y0 * x.w(), out_channels, tp, Stride(p));
      dwm.noalias() += dym * ConstMapMat(cols.data(), kk, tp).transpose();
      if (dx) {
        MapMat(dcols.data(), kk, tp).noalias() = wm.transpose() * dym;
        col2im_rows_add(dcols.data(), x.c(), x.h(), x.w(), kernel, y0, y1, dx->plane_ptr(b, 0));
      }
    }
  }
}

void leaky_relu_inplace(Tensor4& t, double slope) {
  for (double& v : t.values()) {
    if (v <= 0.0) v *= slope;
  }
}

void leaky_relu_backward_inplace(const Tensor4& activated, Tensor4& dy, double slope) {
  auto a = activated.values();
  auto g = dy.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (a[i] <= 0.0) g[i] *= slope;
  }
}

Tensor4 avg_pool2(const Tensor4& x) {
  const std::size_t h = x.h() / 2, w = x.w() / 2;
  Tensor4 y(x.n(), x.c(), h, w);
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double* src = x.plane_ptr(b, c);
      double* dst = y.plane_ptr(b, c);
      for (std::size_t yy = 0; yy < h; ++yy) {
        const double* r0 = src + 2 * yy * x.w();
        const double* r1 = r0 + x.w();
        for (std::size_t xx = 0; xx < w; ++xx) {
          dst[yy * w + xx] = 0.25 * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
        }
      }
    }
  }
  return y;
}

Tensor4 avg_pool2_backward(const Tensor4& dy) {
  Tensor4 dx(dy.n(), dy.c(), dy.h() * 2, dy.w() * 2);
  for (std::size_t b = 0; b < dy.n(); ++b) {
    for (std::size_t c = 0; c < dy.c(); ++c) {
      const double* src = dy.plane_ptr(b, c);
      double* dst = dx.plane_ptr(b, c);
      for (std::size_t yy = 0; yy < dx.h(); ++yy) {
        for (std::size_t xx = 0; xx < dx.w(); ++xx) {
          dst[yy * dx.w() + xx] = 0.25 * src[(yy / 2) * dy.w() + xx / 2];
        }
      }
    }
  }
  return dx;
}

Tensor4 upsample2(const Tensor4& x) {
  Tensor4 y(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double* src = x.plane_ptr(b, c);
      double* dst = y.plane_ptr(b, c);
      for (std::size_t yy = 0; yy < y.h(); ++yy) {
        for (std::size_t xx = 0; xx < y.w(); ++xx) {
          dst[yy * y.w() + xx] = src[(yy / 2) * x.w() + xx / 2];
        }
      }
    }
  }
  return y;
}

Tensor4 upsample2_backward(const Tensor4& dy) {
  const std::size_t h = dy.h() / 2, w = dy.w() / 2;
  Tensor4 dx(dy.n(), dy.c(), h, w);
  for (std::size_t b = 0; b < dy.n(); ++b) {
    for (std::size_t c = 0; c < dy.c(); ++c) {
      const double* src = dy.plane_ptr(b, c);
      double* dst = dx.plane_ptr(b, c);
      for (std::size_t yy = 0; yy < h; ++yy) {
        const double* r0 = src + 2 * yy * dy.w();
        const double* r1 = r0 + dy.w();
        for (std::size_t xx = 0; xx < w; ++xx) {
          dst[yy * w + xx] = r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1];
        }
      }
    }
  }
  return dx;
}

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw std::invalid_argument("concat_channels: shape mismatch");
  }
  Tensor4 out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t p = a.plane();
  for (std::size_t n = 0; n < a.n(); ++n) {
    std::memcpy(out.plane_ptr(n, 0), a.plane_ptr(n, 0), a.c() * p * sizeof(double));
    std::memcpy(out.plane_ptr(n, a.c()), b.plane_ptr(n, 0), b.c() * p * sizeof(double));
  }
  return out;
}

void split_channels(const Tensor4& t, std::size_t first_channels, Tensor4& a, Tensor4& b) {
  const std::size_t p = t.plane();
  a = Tensor4(t.n(), first_channels, t.h(), t.w());
  b = Tensor4(t.n(), t.c() - first_channels, t.h(), t.w());
  for (std::size_t n = 0; n < t.n(); ++n) {
    std::memcpy(a.plane_ptr(n, 0), t.plane_ptr(n, 0), a.c() * p * sizeof(double));
    std::memcpy(b.plane_ptr(n, 0), t.plane_ptr(n, first_channels), b.c() * p * sizeof(double));
  }
}

}  // namespace dn2n::nn
