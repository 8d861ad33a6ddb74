#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

// Dense row-major matrix product with a register-blocked kernel.
//
// Every output element is accumulated in the same order by the same vector
// instruction sequence no matter which row block or row tail it lands in,
// so a row's result never depends on its position in the batch. The patch
// embedder relies on that for exact permutation invariance.

namespace jepa3d::detail {

#if defined(__AVX512F__)
inline constexpr std::size_t kSimdBytes = 64;
#else
inline constexpr std::size_t kSimdBytes = 32;
#endif

template <class T>
struct Simd {
  static constexpr std::size_t width = kSimdBytes / sizeof(T);
  typedef T type __attribute__((vector_size(kSimdBytes)));
};

inline constexpr std::size_t kRowBlock = 6;
inline constexpr std::size_t kVecBlock = 3;
inline constexpr std::size_t kDepthBlock = 256;

// c[R rows, NV vectors] += a[R rows, kc] * panel[kc, NV vectors].
template <class T, std::size_t R, std::size_t NV>
inline void gemm_micro(const T* a, std::size_t a_rs, std::size_t a_cs, const typename Simd<T>::type* panel,
                       std::size_t kc, T* c, std::size_t ldc, std::size_t cols) {
  using V = typename Simd<T>::type;
  constexpr std::size_t W = Simd<T>::width;
  V acc[R][NV];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t q = 0; q < NV; ++q) acc[r][q] = V{};
  for (std::size_t p = 0; p < kc; ++p, panel += NV)
    for (std::size_t r = 0; r < R; ++r) {
      const T av = a[r * a_rs + p * a_cs];
      for (std::size_t q = 0; q < NV; ++q) acc[r][q] += av * panel[q];
    }
  if (cols == NV * W) {
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t q = 0; q < NV; ++q) {
        V o;
        std::memcpy(&o, c + r * ldc + q * W, sizeof(V));
        o += acc[r][q];
        std::memcpy(c + r * ldc + q * W, &o, sizeof(V));
      }
  } else {
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += acc[r][j / W][j % W];
  }
}

template <class T, std::size_t NV>
void gemm_rows(const T* a, std::size_t a_rs, std::size_t a_cs, const typename Simd<T>::type* panel, std::size_t m,
               std::size_t kc, T* c, std::size_t ldc, std::size_t cols) {
  std::size_t i = 0;
  for (; i + kRowBlock <= m; i += kRowBlock)
    gemm_micro<T, kRowBlock, NV>(a + i * a_rs, a_rs, a_cs, panel, kc, c + i * ldc, ldc, cols);
  for (; i < m; ++i) gemm_micro<T, 1, NV>(a + i * a_rs, a_rs, a_cs, panel, kc, c + i * ldc, ldc, cols);
}

// out[m, n] (+)= op(a)[m, k] * op(b)[k, n]. With trans_a, `a` is stored
// [k, m]; with trans_b, `b` is stored [n, k].
template <class T>
void gemm(const T* a, const T* b, T* out, std::size_t m, std::size_t k, std::size_t n, bool trans_a, bool trans_b,
          bool accumulate) {
  using V = typename Simd<T>::type;
  constexpr std::size_t W = Simd<T>::width;
  if (!accumulate) std::fill(out, out + m * n, T(0));
  if (m == 0 || n == 0 || k == 0) return;
  const std::size_t a_rs = trans_a ? 1 : k, a_cs = trans_a ? m : 1;
  const std::size_t b_rs = trans_b ? 1 : n, b_cs = trans_b ? k : 1;  // B(p, j) = b[p * b_rs + j * b_cs]

  thread_local std::vector<V> panel;
  for (std::size_t pc = 0; pc < k; pc += kDepthBlock) {
    const std::size_t kc = std::min(kDepthBlock, k - pc);
    for (std::size_t jb = 0; jb < n; jb += kVecBlock * W) {
      const std::size_t cols = std::min(kVecBlock * W, n - jb);
      const std::size_t nv = (cols + W - 1) / W;
      panel.assign(kc * nv, V{});
      for (std::size_t p = 0; p < kc; ++p)
        for (std::size_t j = 0; j < cols; ++j) panel[p * nv + j / W][j % W] = b[(pc + p) * b_rs + (jb + j) * b_cs];
      const T* ap = a + pc * a_cs;
      T* cp = out + jb;
      if (nv == 3)
        gemm_rows<T, 3>(ap, a_rs, a_cs, panel.data(), m, kc, cp, n, cols);
      else if (nv == 2)
        gemm_rows<T, 2>(ap, a_rs, a_cs, panel.data(), m, kc, cp, n, cols);
      else
        gemm_rows<T, 1>(ap, a_rs, a_cs, panel.data(), m, kc, cp, n, cols);
    }
  }
}

}  // namespace jepa3d::detail
