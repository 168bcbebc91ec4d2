#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

// Data-parallel inner loops used by the tensor primitives. Every kernel has
// a scalar reference implementation and, on x86-64, an AVX2 variant selected
// once at startup. Elementwise kernels are bitwise-identical across variants;
// reductions (dot, sums) may differ in summation order and are tolerance-tested.

namespace uiesnn::kernels {

struct LifStepArgs {
  float gamma;
  float v_th;
  float inv_v_th;  // 1 / v_th
  float d_levels;  // D as float
  float inv_d;     // 1 / D
};

struct Ops {
  // y[i] += a * x[i]
  void (*axpy)(float a, const float* x, float* y, std::size_t n);
  // Fused triple tap: y[i] = ((y[i] + k[0]*a[i]) + k[1]*b[i]) + k[2]*c[i].
  // Bitwise-equal to three sequential axpy passes with the same coefficients.
  void (*axpy3)(const float* k3, const float* a, const float* b,
                const float* c, float* y, std::size_t n);
  // Fused 3x3 stencil row: y[i] accumulates sum_{r,c} k9[3r+c] * xr[i+c]
  // (taps applied in ascending r, then c order). Reads n+2 floats per row.
  // Bitwise-equal to nine sequential axpy passes in the same tap order.
  void (*conv3x3_acc)(const float* k9, const float* x0, const float* x1,
                      const float* x2, float* y, std::size_t n);
  // y[i] = a[i] + b[i] / a[i] - b[i] / a[i] * b[i]
  void (*add)(const float* a, const float* b, float* y, std::size_t n);
  void (*sub)(const float* a, const float* b, float* y, std::size_t n);
  void (*mul)(const float* a, const float* b, float* y, std::size_t n);
  // y[i] = a * x[i]
  void (*scale)(float a, const float* x, float* y, std::size_t n);
  double (*dot)(const float* a, const float* b, std::size_t n);
  // Fused triple dot against a shared left operand:
  //   out[0] = sum g[i]*a[i], out[1] = sum g[i]*b[i], out[2] = sum g[i]*c[i].
  void (*dot3)(const float* g, const float* a, const float* b, const float* c,
               std::size_t n, double out[3]);
  // Fused 3x3 stencil reduction: out[3r+c] = sum_i g[i] * xr[i+c].
  // Reads n+2 floats per row.
  void (*dot3x3)(const float* g, const float* x0, const float* x1,
                 const float* x2, std::size_t n, double out[9]);
  double (*sum)(const float* x, std::size_t n);
  double (*abs_diff_sum)(const float* a, const float* b, std::size_t n);
  std::size_t (*count_nonzero)(const float* x, std::size_t n);
  // One membrane step over a plane:
  //   mu[i]    = gamma * (mu_prev[i] - reset[i]) + u[i]
  //   m        = clamp(floor(mu[i] / v_th), 0, D)
  //   spike[i] = m / D
  //   reset[i] = m * v_th            (consumed by the next step)
  void (*lif_step)(const float* u, const float* mu_prev, float* mu,
                   float* spike, float* reset, std::size_t n, LifStepArgs args);
};

// Active dispatch table (scalar or AVX2, chosen at load time).
const Ops& ops();

// Reference/var tables for equivalence tests.
const Ops& scalar_ops();
const Ops* avx2_ops();  // nullptr when unsupported on this CPU

std::string active_variant();  // "scalar" or "avx2"

}  // namespace uiesnn::kernels
