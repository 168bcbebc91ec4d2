#pragma once

#include <array>

#include "uiesnn/network.hpp"
#include "uiesnn/tensor.hpp"

namespace uiesnn {

struct LossWeights {
  float lambda_pix = 0.5f;
  float lambda_ssim = 1.0f;
  float lambda_fft = 0.1f;
};

// Unweighted component values; total carries the lambda weighting.
struct LossBreakdown {
  std::array<double, 3> pix{}, ssim{}, fft{};  // per scale: 1, 1/2, 1/4
  double l_pix = 0, l_ssim = 0, l_fft = 0, total = 0;
};

// Differentiable multi-scale objective. gt is the full-resolution target
// (1,B,3,H,W); each prediction is compared against the bilinearly resized
// target at its own scale. Per-scale terms use mean reduction so the lambda
// weights do not depend on patch size.
Tensor total_loss(const MultiScaleOutput& out, const Tensor& gt,
                  const LossWeights& w, LossBreakdown* breakdown = nullptr);

// Mean SSIM over batch and channels, 11x11 Gaussian window sigma 1.5
// (shrinks to the largest odd size fitting the image), C1=(0.01)^2,
// C2=(0.03)^2 for [0,1] images. Differentiable.
Tensor ssim_mean(const Tensor& a, const Tensor& b);

// Evaluation metrics (not differentiable).
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
double ssim_metric(const Tensor& a, const Tensor& b);

}  // namespace uiesnn
