#include "uiesnn/kernels.hpp"

#include <cmath>

namespace uiesnn::kernels {
namespace {

void s_axpy(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void s_axpy3(const float* k3, const float* a, const float* b, const float* c,
             float* y, std::size_t n) {
  const float k0 = k3[0], k1 = k3[1], k2 = k3[2];
  for (std::size_t i = 0; i < n; ++i)
    y[i] = ((y[i] + k0 * a[i]) + k1 * b[i]) + k2 * c[i];
}

void s_conv3x3_acc(const float* k9, const float* x0, const float* x1,
                   const float* x2, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    float acc = y[i];
    acc += k9[0] * x0[i];
    acc += k9[1] * x0[i + 1];
    acc += k9[2] * x0[i + 2];
    acc += k9[3] * x1[i];
    acc += k9[4] * x1[i + 1];
    acc += k9[5] * x1[i + 2];
    acc += k9[6] * x2[i];
    acc += k9[7] * x2[i + 1];
    acc += k9[8] * x2[i + 2];
    y[i] = acc;
  }
}

void s_add(const float* a, const float* b, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void s_sub(const float* a, const float* b, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void s_mul(const float* a, const float* b, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void s_scale(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

double s_dot(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

void s_dot3(const float* g, const float* a, const float* b, const float* c,
            std::size_t n, double out[3]) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    a0 += gi * double(a[i]);
    a1 += gi * double(b[i]);
    a2 += gi * double(c[i]);
  }
  out[0] = a0;
  out[1] = a1;
  out[2] = a2;
}

void s_dot3x3(const float* g, const float* x0, const float* x1,
              const float* x2, std::size_t n, double out[9]) {
  double a[9] = {};
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    a[0] += gi * double(x0[i]);
    a[1] += gi * double(x0[i + 1]);
    a[2] += gi * double(x0[i + 2]);
    a[3] += gi * double(x1[i]);
    a[4] += gi * double(x1[i + 1]);
    a[5] += gi * double(x1[i + 2]);
    a[6] += gi * double(x2[i]);
    a[7] += gi * double(x2[i + 1]);
    a[8] += gi * double(x2[i + 2]);
  }
  for (int j = 0; j < 9; ++j) out[j] = a[j];
}

double s_sum(const float* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double s_abs_diff_sum(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::fabs(double(a[i]) - double(b[i]));
  return acc;
}

std::size_t s_count_nonzero(const float* x, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) c += (x[i] != 0.0f);
  return c;
}

void s_lif_step(const float* u, const float* mu_prev, float* mu, float* spike,
                float* reset, std::size_t n, LifStepArgs args) {
  for (std::size_t i = 0; i < n; ++i) {
    float m = args.gamma * (mu_prev[i] - reset[i]) + u[i];
    mu[i] = m;
    float q = std::floor(m * args.inv_v_th);
    if (q < 0.0f) q = 0.0f;
    if (q > args.d_levels) q = args.d_levels;
    spike[i] = q * args.inv_d;
    reset[i] = q * args.v_th;
  }
}

const Ops kScalar = {s_axpy, s_axpy3, s_conv3x3_acc, s_add, s_sub, s_mul,
                     s_scale, s_dot, s_dot3, s_dot3x3, s_sum,
                     s_abs_diff_sum, s_count_nonzero, s_lif_step};

}  // namespace

const Ops& scalar_ops() { return kScalar; }

}  // namespace uiesnn::kernels
