#pragma once

#include <cmath>
#include <vector>

#include "synf/common.hpp"
#include "synf/image.hpp"

namespace synf {

struct PsnrResult {
  double db = 0.0;
  bool infinite = false;
};

inline double mse_images_sum(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DataError("image shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    acc += d * d;
  }
  return acc;
}

inline double mse(const Image& a, const Image& b) {
  return mse_images_sum(a, b) / static_cast<double>(a.data.size());
}

// 10*log10(1/MSE) for unit dynamic range; identical images report infinite.
inline PsnrResult psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return {0.0, true};
  return {10.0 * std::log10(1.0 / m), false};
}

inline PsnrResult psnr_from_mse(double m) {
  if (m == 0.0) return {0.0, true};
  return {10.0 * std::log10(1.0 / m), false};
}

namespace detail {
inline std::vector<double> to_gray(const Image& img) {
  std::vector<double> g(static_cast<size_t>(img.width) * img.height);
  for (size_t i = 0; i < g.size(); ++i) {
    const float* p = img.data.data() + 3 * i;
    g[i] = (static_cast<double>(p[0]) + p[1] + p[2]) / 3.0;
  }
  return g;
}

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

inline const std::vector<double>& ssim_kernel() {
  static const std::vector<double> kernel = [] {
    std::vector<double> k(kSsimWindow * kSsimWindow);
    const int r = kSsimWindow / 2;
    double sum = 0.0;
    for (int y = -r; y <= r; ++y)
      for (int x = -r; x <= r; ++x) {
        const double w =
            std::exp(-(x * x + y * y) / (2.0 * kSsimSigma * kSsimSigma));
        k[(y + r) * kSsimWindow + (x + r)] = w;
        sum += w;
      }
    for (double& w : k) w /= sum;
    return k;
  }();
  return kernel;
}
}  // namespace detail

// SSIM (Wang et al. 2004): 11x11 Gaussian window sigma 1.5, K1=0.01,
// K2=0.03, dynamic range 1. Grayscale by channel mean, averaged over windows
// fully inside the image.
inline double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DataError("ssim: image shape mismatch");
  const int w = a.width, h = a.height;
  if (w < detail::kSsimWindow || h < detail::kSsimWindow)
    throw DataError("ssim: image smaller than the 11x11 window");
  const std::vector<double> ga = detail::to_gray(a);
  const std::vector<double> gb = detail::to_gray(b);
  const std::vector<double>& kern = detail::ssim_kernel();
  const int r = detail::kSsimWindow / 2;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  double total = 0.0;
  int count = 0;
  for (int cy = r; cy < h - r; ++cy) {
    for (int cx = r; cx < w - r; ++cx) {
      double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
      int ki = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const double* ra = ga.data() + (cy + dy) * w + cx;
        const double* rb = gb.data() + (cy + dy) * w + cx;
        for (int dx = -r; dx <= r; ++dx, ++ki) {
          const double kw = kern[ki];
          const double va = ra[dx], vb = rb[dx];
          mu_a += kw * va;
          mu_b += kw * vb;
          aa += kw * va * va;
          bb += kw * vb * vb;
          ab += kw * va * vb;
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      const double s = ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
                       ((mu_a * mu_a + mu_b * mu_b + kC1) *
                        (var_a + var_b + kC2));
      total += s;
      ++count;
    }
  }
  return total / count;
}

}  // namespace synf
