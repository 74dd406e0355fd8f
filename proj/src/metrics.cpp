#include "headsplat/metrics.hpp"

#include <cmath>
#include <limits>

namespace headsplat {

double metric_psnr(const Raster& a, const Raster& b) {
  if (!a.same_shape(b)) throw ValidationError("image dimensions differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sum += d * d;
  }
  if (sum == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sum / static_cast<double>(a.data().size());
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

// Separable blur with the normalized Gaussian window, 'valid' output region.
std::vector<double> blur_valid(const std::vector<double>& img, int w, int h, const double* k) {
  const int ow = w - kWindow + 1;
  const int oh = h - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double metric_ssim(const Raster& a, const Raster& b) {
  if (!a.same_shape(b)) throw ValidationError("image dimensions differ");
  if (a.width() < kWindow || a.height() < kWindow)
    throw ValidationError("SSIM needs images of at least 11x11 pixels");
  double k[kWindow];
  double ksum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    k[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    ksum += k[i];
  }
  for (double& v : k) v /= ksum;
  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  const int w = a.width();
  const int h = a.height();
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    std::vector<double> x(static_cast<std::size_t>(w) * h), y(x.size()), xx(x.size()), yy(x.size()),
        xy(x.size());
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        const std::size_t i = static_cast<std::size_t>(py) * w + px;
        x[i] = a.at(px, py, c);
        y[i] = b.at(px, py, c);
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
    const auto mx = blur_valid(x, w, h, k);
    const auto my = blur_valid(y, w, h, k);
    const auto sxx = blur_valid(xx, w, h, k);
    const auto syy = blur_valid(yy, w, h, k);
    const auto sxy = blur_valid(xy, w, h, k);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      sum += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / a.channels();
}

}  // namespace headsplat
