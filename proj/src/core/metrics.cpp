#include "core/metrics.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "core/error.hpp"

namespace vf {

namespace {

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> taps{};
  const double sigma = 1.5;
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - (kWindow - 1) / 2.0;
    taps[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += taps[static_cast<size_t>(i)];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable valid-region Gaussian filter of one channel.
std::vector<double> blur(const std::vector<double>& src, int w, int h, int& ow, int& oh) {
  static const std::array<double, kWindow> taps = gaussian_taps();
  ow = w - kWindow + 1;
  oh = h - kWindow + 1;
  std::vector<double> tmp(static_cast<size_t>(ow) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) {
        acc += taps[static_cast<size_t>(k)] * src[static_cast<size_t>(y) * w + x + k];
      }
      tmp[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(ow) * oh, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) {
        acc += taps[static_cast<size_t>(k)] * tmp[static_cast<size_t>(y + k) * ow + x];
      }
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw UsageError("ssim: image sizes differ");
  }
  if (a.width < kWindow || a.height < kWindow) {
    throw UsageError("ssim: image smaller than the filter window");
  }
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;

  double total = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    const size_t n = a.pixel_count();
    std::vector<double> xa(n), xb(n), xaa(n), xbb(n), xab(n);
    for (size_t i = 0; i < n; ++i) {
      const double va = a.data[i * 3 + static_cast<size_t>(ch)];
      const double vb = b.data[i * 3 + static_cast<size_t>(ch)];
      xa[i] = va;
      xb[i] = vb;
      xaa[i] = va * va;
      xbb[i] = vb * vb;
      xab[i] = va * vb;
    }
    int ow = 0, oh = 0;
    const std::vector<double> mu_a = blur(xa, a.width, a.height, ow, oh);
    const std::vector<double> mu_b = blur(xb, a.width, a.height, ow, oh);
    const std::vector<double> m_aa = blur(xaa, a.width, a.height, ow, oh);
    const std::vector<double> m_bb = blur(xbb, a.width, a.height, ow, oh);
    const std::vector<double> m_ab = blur(xab, a.width, a.height, ow, oh);

    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double var_a = m_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = m_bb[i] - mu_b[i] * mu_b[i];
      const double cov = m_ab[i] - mu_a[i] * mu_b[i];
      acc += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / 3.0;
}

}  // namespace vf
