// SPDX-License-Identifier: Apache-2.0
//
// AVX2+FMA kernels. This TU is compiled with -mavx2 -mfma; it must only be
// invoked after a runtime cpuid check (see dispatch.cpp).

#include <immintrin.h>

#include <cstddef>

#include "moetrack/kernels.hpp"

namespace moetrack::kern {
namespace {

// ------------------------------------------------------------------ f32 ----

inline void saxpy_row(float a, const float* x, float* y, int n) {
  const __m256 va = _mm256_set1_ps(a);
  int j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256 vy = _mm256_loadu_ps(y + j);
    vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + j), vy);
    _mm256_storeu_ps(y + j, vy);
  }
  for (; j < n; ++j) y[j] += a * x[j];
}

inline float dot_f32(const float* a, const float* b, int n) {
  __m256 acc = _mm256_setzero_ps();
  int p = 0;
  for (; p + 8 <= n; p += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + p), _mm256_loadu_ps(b + p), acc);
  __m128 lo = _mm256_castps256_ps128(acc);
  __m128 hi = _mm256_extractf128_ps(acc, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  float r = _mm_cvtss_f32(lo);
  for (; p < n; ++p) r += a[p] * b[p];
  return r;
}

void gemm_avx2_f32(Trans ta, Trans tb, int m, int n, int k, const float* a,
                   const float* b, float* c, float beta) {
  if (beta == 0.0f) {
    for (int i = 0; i < m * n; ++i) c[i] = 0.0f;
  } else if (beta != 1.0f) {
    for (int i = 0; i < m * n; ++i) c[i] *= beta;
  }
  if (ta == Trans::N && tb == Trans::N) {
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p)
        saxpy_row(a[i * k + p], b + p * n, c + i * n, n);
  } else if (ta == Trans::N && tb == Trans::T) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        c[i * n + j] += dot_f32(a + i * k, b + j * k, k);
  } else if (ta == Trans::T && tb == Trans::N) {
    for (int p = 0; p < k; ++p)
      for (int i = 0; i < m; ++i)
        saxpy_row(a[p * m + i], b + p * n, c + i * n, n);
  } else {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        float acc = 0.0f;
        for (int p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        c[i * n + j] += acc;
      }
  }
}

void add_avx2_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy_avx2_f32(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vy = _mm256_loadu_ps(y + i);
    vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vy);
    _mm256_storeu_ps(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2_f32(float alpha, const float* x, float* out, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

float sum_avx2_f32(const float* x, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  __m128 lo = _mm_add_ps(_mm256_castps256_ps128(acc), _mm256_extractf128_ps(acc, 1));
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  float r = _mm_cvtss_f32(lo);
  for (; i < n; ++i) r += x[i];
  return r;
}

// ------------------------------------------------------------------ f64 ----

inline void daxpy_row(double a, const double* x, double* y, int n) {
  const __m256d va = _mm256_set1_pd(a);
  int j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d vy = _mm256_loadu_pd(y + j);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j), vy);
    _mm256_storeu_pd(y + j, vy);
  }
  for (; j < n; ++j) y[j] += a * x[j];
}

inline double dot_f64(const double* a, const double* b, int n) {
  __m256d acc = _mm256_setzero_pd();
  int p = 0;
  for (; p + 4 <= n; p += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + p), _mm256_loadu_pd(b + p), acc);
  __m128d lo = _mm_add_pd(_mm256_castpd256_pd128(acc), _mm256_extractf128_pd(acc, 1));
  double r = _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
  for (; p < n; ++p) r += a[p] * b[p];
  return r;
}

void gemm_avx2_f64(Trans ta, Trans tb, int m, int n, int k, const double* a,
                   const double* b, double* c, double beta) {
  if (beta == 0.0) {
    for (int i = 0; i < m * n; ++i) c[i] = 0.0;
  } else if (beta != 1.0) {
    for (int i = 0; i < m * n; ++i) c[i] *= beta;
  }
  if (ta == Trans::N && tb == Trans::N) {
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p)
        daxpy_row(a[i * k + p], b + p * n, c + i * n, n);
  } else if (ta == Trans::N && tb == Trans::T) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        c[i * n + j] += dot_f64(a + i * k, b + j * k, k);
  } else if (ta == Trans::T && tb == Trans::N) {
    for (int p = 0; p < k; ++p)
      for (int i = 0; i < m; ++i)
        daxpy_row(a[p * m + i], b + p * n, c + i * n, n);
  } else {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        c[i * n + j] += acc;
      }
  }
}

void add_avx2_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy_avx2_f64(double alpha, const double* x, double* y, std::size_t n) {
  daxpy_row(alpha, x, y, static_cast<int>(n));
}

void scale_avx2_f64(double alpha, const double* x, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

double sum_avx2_f64(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  __m128d lo = _mm_add_pd(_mm256_castpd256_pd128(acc), _mm256_extractf128_pd(acc, 1));
  double r = _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
  for (; i < n; ++i) r += x[i];
  return r;
}

const Ops<float> kAvx2F32 = {gemm_avx2_f32, add_avx2_f32,   sub_avx2_f32,
                             mul_avx2_f32,  axpy_avx2_f32,  scale_avx2_f32,
                             sum_avx2_f32,  "avx2"};
const Ops<double> kAvx2F64 = {gemm_avx2_f64, add_avx2_f64,   sub_avx2_f64,
                              mul_avx2_f64,  axpy_avx2_f64,  scale_avx2_f64,
                              sum_avx2_f64,  "avx2"};

}  // namespace

const Ops<float>* avx2_ops_f32() { return &kAvx2F32; }
const Ops<double>* avx2_ops_f64() { return &kAvx2F64; }

}  // namespace moetrack::kern
