// SPDX-License-Identifier: Apache-2.0
//
// Scalar reference kernels. These are the ground truth the SIMD variants are
// equivalence-tested against.

#include <cstddef>

#include "moetrack/kernels.hpp"

namespace moetrack::kern {
namespace {

template <class T>
void gemm_ref(Trans ta, Trans tb, int m, int n, int k, const T* a, const T* b,
              T* c, T beta) {
  if (beta == T(0)) {
    for (int i = 0; i < m * n; ++i) c[i] = T(0);
  } else if (beta != T(1)) {
    for (int i = 0; i < m * n; ++i) c[i] *= beta;
  }
  if (ta == Trans::N && tb == Trans::N) {
    // C[i][j] += A[i][p] * B[p][j]
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        const T aip = a[i * k + p];
        for (int j = 0; j < n; ++j) c[i * n + j] += aip * b[p * n + j];
      }
  } else if (ta == Trans::N && tb == Trans::T) {
    // B stored n-by-k; C[i][j] += dot(A row i, B row j)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        T acc = T(0);
        for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
        c[i * n + j] += acc;
      }
  } else if (ta == Trans::T && tb == Trans::N) {
    // A stored k-by-m; C[i][j] += A[p][i] * B[p][j]
    for (int p = 0; p < k; ++p)
      for (int i = 0; i < m; ++i) {
        const T api = a[p * m + i];
        for (int j = 0; j < n; ++j) c[i * n + j] += api * b[p * n + j];
      }
  } else {
    // A stored k-by-m, B stored n-by-k
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        T acc = T(0);
        for (int p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        c[i * n + j] += acc;
      }
  }
}

template <class T>
void add_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
template <class T>
void sub_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
template <class T>
void mul_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
template <class T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
template <class T>
void scale_ref(T alpha, const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}
template <class T>
T sum_ref(const T* x, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <class T>
constexpr Ops<T> make_scalar_ops() {
  return Ops<T>{gemm_ref<T>, add_ref<T>,   sub_ref<T>, mul_ref<T>,
                axpy_ref<T>, scale_ref<T>, sum_ref<T>, "scalar"};
}

const Ops<float> kScalarF32 = make_scalar_ops<float>();
const Ops<double> kScalarF64 = make_scalar_ops<double>();

}  // namespace

const Ops<float>* scalar_ops_f32() { return &kScalarF32; }
const Ops<double>* scalar_ops_f64() { return &kScalarF64; }

}  // namespace moetrack::kern
