// SPDX-License-Identifier: Apache-2.0
//
// NEON kernels for aarch64. NEON is baseline on aarch64 so no runtime
// feature check is required beyond compiling for that target.

#include <arm_neon.h>

#include <cstddef>

#include "moetrack/kernels.hpp"

namespace moetrack::kern {
namespace {

// ------------------------------------------------------------------ f32 ----

inline void saxpy_row(float a, const float* x, float* y, int n) {
  const float32x4_t va = vdupq_n_f32(a);
  int j = 0;
  for (; j + 4 <= n; j += 4)
    vst1q_f32(y + j, vfmaq_f32(vld1q_f32(y + j), va, vld1q_f32(x + j)));
  for (; j < n; ++j) y[j] += a * x[j];
}

inline float dot_f32(const float* a, const float* b, int n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  int p = 0;
  for (; p + 4 <= n; p += 4)
    acc = vfmaq_f32(acc, vld1q_f32(a + p), vld1q_f32(b + p));
  float r = vaddvq_f32(acc);
  for (; p < n; ++p) r += a[p] * b[p];
  return r;
}

void gemm_neon_f32(Trans ta, Trans tb, int m, int n, int k, const float* a,
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

void add_neon_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}
void sub_neon_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(out + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}
void mul_neon_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}
void axpy_neon_f32(float alpha, const float* x, float* y, std::size_t n) {
  saxpy_row(alpha, x, y, static_cast<int>(n));
}
void scale_neon_f32(float alpha, const float* x, float* out, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(va, vld1q_f32(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}
float sum_neon_f32(const float* x, std::size_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = vaddq_f32(acc, vld1q_f32(x + i));
  float r = vaddvq_f32(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

// ------------------------------------------------------------------ f64 ----

inline void daxpy_row(double a, const double* x, double* y, int n) {
  const float64x2_t va = vdupq_n_f64(a);
  int j = 0;
  for (; j + 2 <= n; j += 2)
    vst1q_f64(y + j, vfmaq_f64(vld1q_f64(y + j), va, vld1q_f64(x + j)));
  for (; j < n; ++j) y[j] += a * x[j];
}

inline double dot_f64(const double* a, const double* b, int n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  int p = 0;
  for (; p + 2 <= n; p += 2)
    acc = vfmaq_f64(acc, vld1q_f64(a + p), vld1q_f64(b + p));
  double r = vaddvq_f64(acc);
  for (; p < n; ++p) r += a[p] * b[p];
  return r;
}

void gemm_neon_f64(Trans ta, Trans tb, int m, int n, int k, const double* a,
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

void add_neon_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}
void sub_neon_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}
void mul_neon_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}
void axpy_neon_f64(double alpha, const double* x, double* y, std::size_t n) {
  daxpy_row(alpha, x, y, static_cast<int>(n));
}
void scale_neon_f64(double alpha, const double* x, double* out, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}
double sum_neon_f64(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double r = vaddvq_f64(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

const Ops<float> kNeonF32 = {gemm_neon_f32, add_neon_f32,   sub_neon_f32,
                             mul_neon_f32,  axpy_neon_f32,  scale_neon_f32,
                             sum_neon_f32,  "neon"};
const Ops<double> kNeonF64 = {gemm_neon_f64, add_neon_f64,   sub_neon_f64,
                              mul_neon_f64,  axpy_neon_f64,  scale_neon_f64,
                              sum_neon_f64,  "neon"};

}  // namespace

const Ops<float>* neon_ops_f32() { return &kNeonF32; }
const Ops<double>* neon_ops_f64() { return &kNeonF64; }

}  // namespace moetrack::kern
