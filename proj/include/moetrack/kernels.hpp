// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

// Data-parallel inner loops used by the tensor engine. Every kernel has a
// scalar reference implementation plus ISA-specific variants (AVX2 on x86,
// NEON on aarch64) selected once at startup by CPU feature detection. The
// environment variable MOETRACK_KERNELS=scalar|avx2|neon forces a backend.

namespace moetrack::kern {

enum class Trans { N, T };

// Row-major general matrix multiply: C = op(A)*op(B) + beta*C, with
// op(A) m-by-k and op(B) k-by-n. Matrices are packed (no leading-dim gaps);
// A and B are stored untransposed, the flags pick the logical orientation.
template <class T>
struct Ops {
  void (*gemm)(Trans ta, Trans tb, int m, int n, int k, const T* a,
               const T* b, T* c, T beta);
  void (*add)(const T* a, const T* b, T* out, std::size_t n);
  void (*sub)(const T* a, const T* b, T* out, std::size_t n);
  void (*mul)(const T* a, const T* b, T* out, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  void (*scale)(T alpha, const T* x, T* out, std::size_t n);
  T (*sum)(const T* x, std::size_t n);
  const char* name;
};

// Active backend (resolved on first use, stable for the process lifetime).
const Ops<float>& ops_f32();
const Ops<double>& ops_f64();

inline const Ops<float>& ops_for(float) { return ops_f32(); }
inline const Ops<double>& ops_for(double) { return ops_f64(); }

// Specific backends, exposed for equivalence tests.
const Ops<float>* scalar_ops_f32();
const Ops<double>* scalar_ops_f64();
const Ops<float>* simd_ops_f32();    // nullptr if unavailable on this CPU
const Ops<double>* simd_ops_f64();

template <class T>
inline void gemm(Trans ta, Trans tb, int m, int n, int k, const T* a,
                 const T* b, T* c, T beta = T(0)) {
  ops_for(T{}).gemm(ta, tb, m, n, k, a, b, c, beta);
}

template <class T>
inline void vadd(const T* a, const T* b, T* out, std::size_t n) {
  ops_for(T{}).add(a, b, out, n);
}
template <class T>
inline void vsub(const T* a, const T* b, T* out, std::size_t n) {
  ops_for(T{}).sub(a, b, out, n);
}
template <class T>
inline void vmul(const T* a, const T* b, T* out, std::size_t n) {
  ops_for(T{}).mul(a, b, out, n);
}
template <class T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  ops_for(T{}).axpy(alpha, x, y, n);
}
template <class T>
inline void vscale(T alpha, const T* x, T* out, std::size_t n) {
  ops_for(T{}).scale(alpha, x, out, n);
}
template <class T>
inline T vsum(const T* x, std::size_t n) {
  return ops_for(T{}).sum(x, n);
}

}  // namespace moetrack::kern
