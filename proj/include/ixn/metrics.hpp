#pragma once

#include "ixn/tensor.hpp"

namespace ixn {

// Image-quality metrics over single-channel images in [0, 1].

double mse(const Tensor<float>& a, const Tensor<float>& b);
double mae(const Tensor<float>& a, const Tensor<float>& b);

/// PSNR in dB for unit-range images: 10*log10(1/mse). A zero-MSE pair is
/// reported as the capped sentinel 99 dB.
double psnr_from_mse(double mse_mean);

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2, averaged over valid window positions.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

}  // namespace ixn
