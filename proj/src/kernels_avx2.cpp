// AVX2 kernel variants. Compiled with -mavx2 only when targeting x86-64;
// selected at runtime via __builtin_cpu_supports. Elementwise kernels use the
// same mul/add sequence as the scalar reference (no FMA contraction) so the
// two variants agree bitwise; reductions accumulate in double lanes.

#include "uiesnn/kernels.hpp"

#include <cstdlib>
#include <string>

#if defined(__x86_64__) || defined(_M_X64)
#define UIESNN_HAVE_AVX2_BUILD 1
#include <immintrin.h>
#else
#define UIESNN_HAVE_AVX2_BUILD 0
#endif

namespace uiesnn::kernels {

#if UIESNN_HAVE_AVX2_BUILD
namespace {

void v_axpy(float a, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vy = _mm256_loadu_ps(y + i);
    __m256 vx = _mm256_loadu_ps(x + i);
    vy = _mm256_add_ps(vy, _mm256_mul_ps(va, vx));
    _mm256_storeu_ps(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void v_axpy3(const float* k3, const float* a, const float* b, const float* c,
             float* y, std::size_t n) {
  const __m256 k0 = _mm256_set1_ps(k3[0]);
  const __m256 k1 = _mm256_set1_ps(k3[1]);
  const __m256 k2 = _mm256_set1_ps(k3[2]);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vy = _mm256_loadu_ps(y + i);
    vy = _mm256_add_ps(vy, _mm256_mul_ps(k0, _mm256_loadu_ps(a + i)));
    vy = _mm256_add_ps(vy, _mm256_mul_ps(k1, _mm256_loadu_ps(b + i)));
    vy = _mm256_add_ps(vy, _mm256_mul_ps(k2, _mm256_loadu_ps(c + i)));
    _mm256_storeu_ps(y + i, vy);
  }
  for (; i < n; ++i) y[i] = ((y[i] + k3[0] * a[i]) + k3[1] * b[i]) + k3[2] * c[i];
}

void v_conv3x3_acc(const float* k9, const float* x0, const float* x1,
                   const float* x2, float* y, std::size_t n) {
  __m256 k[9];
  for (int j = 0; j < 9; ++j) k[j] = _mm256_set1_ps(k9[j]);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vy = _mm256_loadu_ps(y + i);
    vy = _mm256_add_ps(vy, _mm256_mul_ps(k[0], _mm256_loadu_ps(x0 + i)));
    vy = _mm256_add_ps(vy, _mm256_mul_ps(k[1], _mm256_loadu_ps(x0 + i + 1)));
    vy = _mm256_add_ps(vy, _mm256_mul_ps(k[2], _mm256_loadu_ps(x0 + i + 2)));
    vy = _mm256_add_ps(vy, _mm256_mul_ps(k[3], _mm256_loadu_ps(x1 + i)));
    vy = _mm256_add_ps(vy, _mm256_mul_ps(k[4], _mm256_loadu_ps(x1 + i + 1)));
    vy = _mm256_add_ps(vy, _mm256_mul_ps(k[5], _mm256_loadu_ps(x1 + i + 2)));
    vy = _mm256_add_ps(vy, _mm256_mul_ps(k[6], _mm256_loadu_ps(x2 + i)));
    vy = _mm256_add_ps(vy, _mm256_mul_ps(k[7], _mm256_loadu_ps(x2 + i + 1)));
    vy = _mm256_add_ps(vy, _mm256_mul_ps(k[8], _mm256_loadu_ps(x2 + i + 2)));
    _mm256_storeu_ps(y + i, vy);
  }
  for (; i < n; ++i) {
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

void v_add(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void v_sub(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void v_mul(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void v_scale(float a, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = a * x[i];
}

inline double hsum_pd(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double v_dot(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 va = _mm256_loadu_ps(a + i);
    __m256 vb = _mm256_loadu_ps(b + i);
    acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va)),
                           _mm256_cvtps_pd(_mm256_castps256_ps128(vb)), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va, 1)),
                           _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1)), acc1);
  }
  double acc = hsum_pd(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

void v_dot3(const float* g, const float* a, const float* b, const float* c,
            std::size_t n, double out[3]) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vg = _mm256_cvtps_pd(_mm_loadu_ps(g + i));
    acc0 = _mm256_fmadd_pd(vg, _mm256_cvtps_pd(_mm_loadu_ps(a + i)), acc0);
    acc1 = _mm256_fmadd_pd(vg, _mm256_cvtps_pd(_mm_loadu_ps(b + i)), acc1);
    acc2 = _mm256_fmadd_pd(vg, _mm256_cvtps_pd(_mm_loadu_ps(c + i)), acc2);
  }
  double a0 = hsum_pd(acc0), a1 = hsum_pd(acc1), a2 = hsum_pd(acc2);
  for (; i < n; ++i) {
    const double gi = g[i];
    a0 += gi * double(a[i]);
    a1 += gi * double(b[i]);
    a2 += gi * double(c[i]);
  }
  out[0] = a0;
  out[1] = a1;
  out[2] = a2;
}

void v_dot3x3(const float* g, const float* x0, const float* x1,
              const float* x2, std::size_t n, double out[9]) {
  __m256d acc[9];
  for (int j = 0; j < 9; ++j) acc[j] = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vg = _mm256_cvtps_pd(_mm_loadu_ps(g + i));
    acc[0] = _mm256_fmadd_pd(vg, _mm256_cvtps_pd(_mm_loadu_ps(x0 + i)), acc[0]);
    acc[1] = _mm256_fmadd_pd(vg, _mm256_cvtps_pd(_mm_loadu_ps(x0 + i + 1)), acc[1]);
    acc[2] = _mm256_fmadd_pd(vg, _mm256_cvtps_pd(_mm_loadu_ps(x0 + i + 2)), acc[2]);
    acc[3] = _mm256_fmadd_pd(vg, _mm256_cvtps_pd(_mm_loadu_ps(x1 + i)), acc[3]);
    acc[4] = _mm256_fmadd_pd(vg, _mm256_cvtps_pd(_mm_loadu_ps(x1 + i + 1)), acc[4]);
    acc[5] = _mm256_fmadd_pd(vg, _mm256_cvtps_pd(_mm_loadu_ps(x1 + i + 2)), acc[5]);
    acc[6] = _mm256_fmadd_pd(vg, _mm256_cvtps_pd(_mm_loadu_ps(x2 + i)), acc[6]);
    acc[7] = _mm256_fmadd_pd(vg, _mm256_cvtps_pd(_mm_loadu_ps(x2 + i + 1)), acc[7]);
    acc[8] = _mm256_fmadd_pd(vg, _mm256_cvtps_pd(_mm_loadu_ps(x2 + i + 2)), acc[8]);
  }
  double a[9];
  for (int j = 0; j < 9; ++j) a[j] = hsum_pd(acc[j]);
  for (; i < n; ++i) {
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

double v_sum(const float* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vx = _mm256_loadu_ps(x + i);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(vx)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1)));
  }
  double acc = hsum_pd(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

double v_abs_diff_sum(const float* a, const float* b, std::size_t n) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 va = _mm256_loadu_ps(a + i);
    __m256 vb = _mm256_loadu_ps(b + i);
    __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va)),
                               _mm256_cvtps_pd(_mm256_castps256_ps128(vb)));
    __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va, 1)),
                               _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1)));
    acc0 = _mm256_add_pd(acc0, _mm256_andnot_pd(sign_mask, d0));
    acc1 = _mm256_add_pd(acc1, _mm256_andnot_pd(sign_mask, d1));
  }
  double acc = hsum_pd(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    double d = double(a[i]) - double(b[i]);
    acc += d < 0 ? -d : d;
  }
  return acc;
}

std::size_t v_count_nonzero(const float* x, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t c = 0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 eq = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_EQ_OQ);
    c += 8 - std::size_t(__builtin_popcount(unsigned(_mm256_movemask_ps(eq))));
  }
  for (; i < n; ++i) c += (x[i] != 0.0f);
  return c;
}

void v_lif_step(const float* u, const float* mu_prev, float* mu, float* spike,
                float* reset, std::size_t n, LifStepArgs args) {
  const __m256 gamma = _mm256_set1_ps(args.gamma);
  const __m256 inv_vth = _mm256_set1_ps(args.inv_v_th);
  const __m256 vth = _mm256_set1_ps(args.v_th);
  const __m256 dlev = _mm256_set1_ps(args.d_levels);
  const __m256 invd = _mm256_set1_ps(args.inv_d);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 m = _mm256_add_ps(
        _mm256_mul_ps(gamma, _mm256_sub_ps(_mm256_loadu_ps(mu_prev + i),
                                           _mm256_loadu_ps(reset + i))),
        _mm256_loadu_ps(u + i));
    _mm256_storeu_ps(mu + i, m);
    __m256 q = _mm256_floor_ps(_mm256_mul_ps(m, inv_vth));
    q = _mm256_min_ps(_mm256_max_ps(q, zero), dlev);
    _mm256_storeu_ps(spike + i, _mm256_mul_ps(q, invd));
    _mm256_storeu_ps(reset + i, _mm256_mul_ps(q, vth));
  }
  if (i < n) {
    scalar_ops().lif_step(u + i, mu_prev + i, mu + i, spike + i, reset + i,
                          n - i, args);
  }
}

const Ops kAvx2 = {v_axpy, v_axpy3, v_conv3x3_acc, v_add, v_sub, v_mul,
                   v_scale, v_dot, v_dot3, v_dot3x3, v_sum,
                   v_abs_diff_sum, v_count_nonzero, v_lif_step};

}  // namespace

const Ops* avx2_ops() {
  return __builtin_cpu_supports("avx2") ? &kAvx2 : nullptr;
}
#else
const Ops* avx2_ops() { return nullptr; }
#endif

namespace {

// UIESNN_KERNELS=scalar forces the reference kernels even when AVX2 is
// available (diagnostic aid; results are bitwise identical either way).
const Ops* select_ops() {
  const char* force = std::getenv("UIESNN_KERNELS");
  if (force && std::string(force) == "scalar") return &scalar_ops();
  return avx2_ops() ? avx2_ops() : &scalar_ops();
}

}  // namespace

const Ops& ops() {
  static const Ops* active = select_ops();
  return *active;
}

std::string active_variant() {
  return &ops() == avx2_ops() ? "avx2" : "scalar";
}

}  // namespace uiesnn::kernels
