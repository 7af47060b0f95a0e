#include <immintrin.h>

#include "evd/kernels.hpp"

// AVX2 variants. No FMA: fused mul-add rounds once where the scalar kernels
// round twice, and elementwise kernels are held to bit-equality with scalar.

namespace evd::kern {

namespace {

void lif_step_avx2(int n, float dc, float dv, float uth, const float* in,
                   float* c, float* u, float* o) {
  const __m256 vdc = _mm256_set1_ps(dc);
  const __m256 vdv = _mm256_set1_ps(dv);
  const __m256 vth = _mm256_set1_ps(uth);
  const __m256 vone = _mm256_set1_ps(1.0f);
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vin = _mm256_loadu_ps(in + i);
    const __m256 vc = _mm256_add_ps(_mm256_mul_ps(vdc, _mm256_loadu_ps(c + i)), vin);
    const __m256 vg = _mm256_sub_ps(vone, _mm256_loadu_ps(o + i));
    const __m256 vdvu = _mm256_mul_ps(vdv, _mm256_loadu_ps(u + i));
    const __m256 vu = _mm256_add_ps(_mm256_mul_ps(vdvu, vg), vc);
    const __m256 vsp = _mm256_and_ps(_mm256_cmp_ps(vu, vth, _CMP_GE_OQ), vone);
    _mm256_storeu_ps(c + i, vc);
    _mm256_storeu_ps(u + i, vu);
    _mm256_storeu_ps(o + i, vsp);
  }
  for (; i < n; ++i) {
    const float ci = dc * c[i] + in[i];
    const float ui = (dv * u[i]) * (1.0f - o[i]) + ci;
    c[i] = ci;
    u[i] = ui;
    o[i] = ui >= uth ? 1.0f : 0.0f;
  }
}

void axpy_f_avx2(int n, float a, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(a);
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vy = _mm256_loadu_ps(y + i);
    _mm256_storeu_ps(y + i, _mm256_add_ps(vy, _mm256_mul_ps(va, _mm256_loadu_ps(x + i))));
  }
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

void axpy_d_avx2(int n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i))));
  }
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_fd_avx2(int n, const float* x, const double* y) {
  __m256d acc = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(vx, _mm256_loadu_pd(y + i)));
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += static_cast<double>(x[i]) * y[i];
  return hsum(acc) + tail;
}

double dot_ff_avx2(int n, const float* x, const float* y) {
  __m256d acc = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    const __m256d vy = _mm256_cvtps_pd(_mm_loadu_ps(y + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(vx, vy));
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return hsum(acc) + tail;
}

}  // namespace

const Kernels& avx2() {
  static const Kernels table = {
      "avx2", lif_step_avx2, axpy_f_avx2, axpy_d_avx2, dot_fd_avx2, dot_ff_avx2,
  };
  return table;
}

}  // namespace evd::kern
