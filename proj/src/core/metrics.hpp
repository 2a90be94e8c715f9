#pragma once

#include "core/image.hpp"

namespace vf {

// Mean SSIM over the valid region with the standard 11x11 Gaussian window
// (sigma 1.5, K1 0.01, K2 0.03, dynamic range 1), averaged over channels.
double ssim(const Image& a, const Image& b);

}  // namespace vf
