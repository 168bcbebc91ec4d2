#include "uiesnn/losses.hpp"

#include <cmath>
#include <limits>

#include "uiesnn/ops.hpp"

namespace uiesnn {

namespace op = ops;

namespace {

std::vector<float> gaussian_window(int k, float sigma) {
  std::vector<float> w(std::size_t(k) * k);
  const int c = k / 2;
  double sum = 0.0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      const double d2 = double(y - c) * (y - c) + double(x - c) * (x - c);
      const double v = std::exp(-d2 / (2.0 * sigma * sigma));
      w[std::size_t(y) * k + x] = float(v);
      sum += v;
    }
  for (auto& v : w) v = float(v / sum);
  return w;
}

int window_size(const Shape& s) {
  int k = std::min(11, std::min(s.h(), s.w()));
  if (k % 2 == 0) --k;
  return k;
}

constexpr float kC1 = 0.01f * 0.01f;
constexpr float kC2 = 0.03f * 0.03f;

Tensor resize_to(const Tensor& gt, const Shape& like) {
  if (gt.shape().h() == like.h() && gt.shape().w() == like.w()) return gt;
  return op::resize_bilinear(gt, like.h(), like.w());
}

}  // namespace

Tensor ssim_mean(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape()))
    throw ShapeError("ssim: shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  const int k = window_size(a.shape());
  const auto win = gaussian_window(k, 1.5f);

  Tensor mu_a = op::depthwise_conv2d_valid(a, win, k);
  Tensor mu_b = op::depthwise_conv2d_valid(b, win, k);
  Tensor saa = op::sub(op::depthwise_conv2d_valid(op::mul(a, a), win, k),
                       op::mul(mu_a, mu_a));
  Tensor sbb = op::sub(op::depthwise_conv2d_valid(op::mul(b, b), win, k),
                       op::mul(mu_b, mu_b));
  Tensor sab = op::sub(op::depthwise_conv2d_valid(op::mul(a, b), win, k),
                       op::mul(mu_a, mu_b));

  Tensor num = op::mul(op::add_const(op::scale(op::mul(mu_a, mu_b), 2.0f), kC1),
                       op::add_const(op::scale(sab, 2.0f), kC2));
  Tensor den = op::mul(
      op::add_const(op::add(op::mul(mu_a, mu_a), op::mul(mu_b, mu_b)), kC1),
      op::add_const(op::add(saa, sbb), kC2));
  return op::mean_all(op::div(num, den));
}

Tensor total_loss(const MultiScaleOutput& out, const Tensor& gt,
                  const LossWeights& w, LossBreakdown* breakdown) {
  const Tensor* preds[3] = {&out.full, &out.half, &out.quarter};
  LossBreakdown bd;

  Tensor pix_sum, ssim_sum, fft_sum;
  for (int s = 0; s < 3; ++s) {
    const Tensor& pred = *preds[s];
    Tensor target = resize_to(gt, pred.shape());

    Tensor pix = op::l1_mean(pred, target);
    Tensor ssim_term = op::add_const(op::scale(ssim_mean(pred, target), -1.0f), 1.0f);
    Tensor fft = op::l1_mean(op::fft2(pred), op::fft2(target));

    bd.pix[std::size_t(s)] = double(pix.item());
    bd.ssim[std::size_t(s)] = double(ssim_term.item());
    bd.fft[std::size_t(s)] = double(fft.item());

    pix_sum = s == 0 ? pix : op::add(pix_sum, pix);
    ssim_sum = s == 0 ? ssim_term : op::add(ssim_sum, ssim_term);
    fft_sum = s == 0 ? fft : op::add(fft_sum, fft);
  }

  Tensor total = op::add(
      op::add(op::scale(pix_sum, w.lambda_pix), op::scale(ssim_sum, w.lambda_ssim)),
      op::scale(fft_sum, w.lambda_fft));

  if (breakdown) {
    bd.l_pix = bd.pix[0] + bd.pix[1] + bd.pix[2];
    bd.l_ssim = bd.ssim[0] + bd.ssim[1] + bd.ssim[2];
    bd.l_fft = bd.fft[0] + bd.fft[1] + bd.fft[2];
    bd.total = double(total.item());
    *breakdown = bd;
  }
  return total;
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (!(a.shape() == b.shape()))
    throw ShapeError("psnr: shape mismatch");
  double mse = 0.0;
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = double(a.data()[i]) - double(b.data()[i]);
    mse += d * d;
  }
  mse /= double(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim_metric(const Tensor& a, const Tensor& b) {
  return double(ssim_mean(a, b).item());
}

}  // namespace uiesnn
