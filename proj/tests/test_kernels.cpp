// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "moetrack/kernels.hpp"

using namespace moetrack;

namespace {

template <class T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return v;
}

// Plain triple-loop product of op(A)*op(B), independent of the kernel code.
template <class T>
std::vector<T> naive_gemm(kern::Trans ta, kern::Trans tb, int m, int n, int k,
                          const std::vector<T>& a, const std::vector<T>& b) {
  auto A = [&](int i, int p) { return ta == kern::Trans::N ? a[i * k + p] : a[p * m + i]; };
  auto B = [&](int p, int j) { return tb == kern::Trans::N ? b[p * n + j] : b[j * k + p]; };
  std::vector<T> c(static_cast<std::size_t>(m) * n, T(0));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) c[i * n + j] += A(i, p) * B(p, j);
  return c;
}

template <class T>
void check_backend_gemm(const kern::Ops<T>& ops, double tol) {
  std::mt19937_64 rng(7);
  const kern::Trans tt[] = {kern::Trans::N, kern::Trans::T};
  for (auto ta : tt)
    for (auto tb : tt)
      for (auto [m, n, k] : {std::array{3, 4, 5}, std::array{1, 7, 2},
                             std::array{16, 16, 16}, std::array{9, 33, 17}}) {
        auto a = random_vec<T>(static_cast<std::size_t>(m) * k, rng);
        auto b = random_vec<T>(static_cast<std::size_t>(k) * n, rng);
        auto want = naive_gemm(ta, tb, m, n, k, a, b);
        std::vector<T> got(want.size(), T(0.5));
        ops.gemm(ta, tb, m, n, k, a.data(), b.data(), got.data(), T(0));
        for (std::size_t i = 0; i < want.size(); ++i)
          CHECK(std::abs(double(got[i]) - double(want[i])) < tol);
        // beta = 1 accumulates
        ops.gemm(ta, tb, m, n, k, a.data(), b.data(), got.data(), T(1));
        for (std::size_t i = 0; i < want.size(); ++i)
          CHECK(std::abs(double(got[i]) - 2.0 * double(want[i])) < 2 * tol);
      }
}

}  // namespace

TEST_CASE("scalar gemm matches naive oracle") {
  check_backend_gemm(*kern::scalar_ops_f32(), 1e-4);
  check_backend_gemm(*kern::scalar_ops_f64(), 1e-12);
}

TEST_CASE("simd backend matches scalar reference") {
  const auto* s32 = kern::simd_ops_f32();
  const auto* s64 = kern::simd_ops_f64();
  if (!s32 || !s64) {
    MESSAGE("no SIMD backend on this CPU, skipping");
    return;
  }
  check_backend_gemm(*s32, 1e-4);
  check_backend_gemm(*s64, 1e-12);

  std::mt19937_64 rng(11);
  for (std::size_t n : {1ul, 7ul, 8ul, 64ul, 1001ul}) {
    auto a = random_vec<float>(n, rng);
    auto b = random_vec<float>(n, rng);
    std::vector<float> r1(n), r2(n);
    kern::scalar_ops_f32()->add(a.data(), b.data(), r1.data(), n);
    s32->add(a.data(), b.data(), r2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(r1[i] == doctest::Approx(r2[i]).epsilon(1e-6));
    kern::scalar_ops_f32()->mul(a.data(), b.data(), r1.data(), n);
    s32->mul(a.data(), b.data(), r2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(r1[i] == doctest::Approx(r2[i]).epsilon(1e-6));
    r1 = b; r2 = b;
    kern::scalar_ops_f32()->axpy(0.3f, a.data(), r1.data(), n);
    s32->axpy(0.3f, a.data(), r2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(r1[i] == doctest::Approx(r2[i]).epsilon(1e-5));
    CHECK(kern::scalar_ops_f32()->sum(a.data(), n) ==
          doctest::Approx(s32->sum(a.data(), n)).epsilon(1e-4));
  }
}

TEST_CASE("dispatch returns a usable backend") {
  const auto& ops = kern::ops_f32();
  CHECK(ops.name != nullptr);
  float a[3] = {1, 2, 3}, b[3] = {4, 5, 6}, c[3];
  ops.add(a, b, c, 3);
  CHECK(c[0] == 5.0f);
  CHECK(c[2] == 9.0f);
}
