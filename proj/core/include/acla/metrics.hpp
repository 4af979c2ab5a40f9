#pragma once

#include "acla/tensor.hpp"

namespace acla {

// ITU-R BT.601 luminance of an RGB map in [0,1]; single-channel input passes
// through unchanged.
Tensor luminance(const Tensor& image);

// Peak signal-to-noise ratio in dB against peak 1.0.  Identical images report
// the cap value 99.0.
double psnr(const Tensor& a, const Tensor& b);

// Mean local SSIM over valid 11x11 windows (Gaussian sigma 1.5, k1 = 0.01,
// k2 = 0.03), single-channel input.
double ssim(const Tensor& a, const Tensor& b);

constexpr double kPsnrCap = 99.0;

}  // namespace acla
