#pragma once

#include <array>
#include <vector>

#include "uiesnn/tensor.hpp"

// Differentiable primitives over rank-5 tensors (T x B x C x H x W).
// Spatial ops run independently per (t, b) slice. Each op records its
// backward closure on the active tape when an input requires grad.

namespace uiesnn::ops {

// Cross-correlation convolution; kernel is rank 4 (Cout x Cin x k x k).
Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int pad);

// Shared fixed k x k window applied per channel, valid padding, no kernel
// gradient (SSIM windows).
Tensor depthwise_conv2d_valid(const Tensor& x, const std::vector<float>& window, int k);

Tensor avgpool2d(const Tensor& x, int window);
Tensor adaptive_gap(const Tensor& x);
Tensor upsample_nearest(const Tensor& x, int out_h, int out_w);
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
Tensor reflect_pad2d(const Tensor& x, int top, int bottom, int left, int right);
Tensor crop2d(const Tensor& x, int top, int left, int out_h, int out_w);

// Per-channel forward DFT; output has 2C channels: real planes 0..C-1,
// imaginary planes C..2C-1.
Tensor fft2(const Tensor& x);

std::array<Tensor, 4> channel_split4(const Tensor& x);
Tensor channel_concat(const std::vector<Tensor>& parts);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_const(const Tensor& x, float c);
Tensor scale(const Tensor& x, float c);

// Broadcast multiplies. vec lengths: C (channel), T (time), 1 (scalar param);
// gate is (T, B, 1, H, W).
Tensor mul_channel(const Tensor& x, const Tensor& vec_c);
Tensor mul_time(const Tensor& x, const Tensor& vec_t);
Tensor mul_scalar_param(const Tensor& x, const Tensor& s);
Tensor mul_spatial(const Tensor& x, const Tensor& gate);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

// vec (rank 1, n) -> rank 1, m with weight (m x n) and bias (m).
Tensor linear(const Tensor& vec, const Tensor& weight, const Tensor& bias);

// Reductions (double accumulation).
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor l1_mean(const Tensor& a, const Tensor& b);

Tensor temporal_mean(const Tensor& x);   // (1,B,C,H,W)
Tensor mean_over_bchw(const Tensor& x);  // rank 1, length T
Tensor mean_over_tbhw(const Tensor& x);  // rank 1, length C
Tensor mean_over_c(const Tensor& x);     // (T,B,1,H,W)

Tensor replicate_temporal(const Tensor& img, int t);  // (1,B,C,H,W) -> (T,...)

void check_finite(const Tensor& x, const std::string& where);

}  // namespace uiesnn::ops
