#pragma once

#include "headsplat/raster.hpp"

namespace headsplat {

/// 10 log10(1 / MSE) for images in [0,1]; +infinity for identical images.
double metric_psnr(const Raster& a, const Raster& b);

/// Mean SSIM (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03, L 1) over
/// the valid-window region, averaged over channels.
double metric_ssim(const Raster& a, const Raster& b);

}  // namespace headsplat
