// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <cstring>

#include "moetrack/kernels.hpp"

namespace moetrack::kern {

#if defined(MOETRACK_BUILD_AVX2)
const Ops<float>* avx2_ops_f32();
const Ops<double>* avx2_ops_f64();
#endif
#if defined(MOETRACK_BUILD_NEON)
const Ops<float>* neon_ops_f32();
const Ops<double>* neon_ops_f64();
#endif

namespace {

struct Selected {
  const Ops<float>* f32;
  const Ops<double>* f64;
};

Selected select() {
  const char* force = std::getenv("MOETRACK_KERNELS");
  if (force && std::strcmp(force, "scalar") == 0)
    return {scalar_ops_f32(), scalar_ops_f64()};
#if defined(MOETRACK_BUILD_AVX2)
  const bool have_avx2 =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  if (force && std::strcmp(force, "avx2") == 0 && have_avx2)
    return {avx2_ops_f32(), avx2_ops_f64()};
  if (!force && have_avx2) return {avx2_ops_f32(), avx2_ops_f64()};
#endif
#if defined(MOETRACK_BUILD_NEON)
  if (!force || std::strcmp(force, "neon") == 0)
    return {neon_ops_f32(), neon_ops_f64()};
#endif
  return {scalar_ops_f32(), scalar_ops_f64()};
}

const Selected& active() {
  static const Selected s = select();
  return s;
}

}  // namespace

const Ops<float>& ops_f32() { return *active().f32; }
const Ops<double>& ops_f64() { return *active().f64; }

const Ops<float>* simd_ops_f32() {
#if defined(MOETRACK_BUILD_AVX2)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return avx2_ops_f32();
#endif
#if defined(MOETRACK_BUILD_NEON)
  return neon_ops_f32();
#endif
  return nullptr;
}

const Ops<double>* simd_ops_f64() {
#if defined(MOETRACK_BUILD_AVX2)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return avx2_ops_f64();
#endif
#if defined(MOETRACK_BUILD_NEON)
  return neon_ops_f64();
#endif
  return nullptr;
}

}  // namespace moetrack::kern
