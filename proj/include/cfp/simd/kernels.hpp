#pragma once

// Hot inner loops shared by the encoder, the Mel front-end and the matcher.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is chosen once at startup from CPUID;
// select_kernels("scalar") hands out the reference table. Results of
// the two variants agree to rounding (see tests/unit/test_kernels.cpp), and a
// given variant is bit-deterministic.
//
// All matrices are row-major with explicit leading dimensions.

#include <cstddef>
#include <string_view>
#include <type_traits>

namespace cfp::simd {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  const char* name;

  // sum a[i]*b[i], products and sum in double.
  double (*dot_f64acc)(const float* a, const float* b, std::size_t n);

  // out[r] = dot_f64acc(q, rows + r*dim, dim) for r in [0, n_rows), bit for bit.
  void (*dot_rows_f64acc)(const float* q, const float* rows, std::size_t n_rows,
                          std::size_t dim, double* out);

  // C[m x n] (+)= A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                  const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate);

  // C[m x n] (+)= A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                  const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate);

  // y += alpha * x
  void (*axpy)(std::size_t n, float alpha, const float* x, float* y);
};

const KernelTable& scalar_kernels();

// nullptr when the AVX2 translation unit was not built or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

// The table selected for this process.
const KernelTable& kernels();

// Parses "scalar" / "avx2"; anything else yields the CPUID default.
const KernelTable& select_kernels(std::string_view request);

// Reference implementations for any arithmetic type; the float specializations
// below route through the dispatched table.
template <typename T>
void gemm_nn_ref(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                 const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * lda + p];
      const T* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt_ref(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                 const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      const T* arow = a + i * lda;
      const T* brow = b + j * ldb;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + s : s;
    }
  }
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  if constexpr (std::is_same_v<T, float>) {
    kernels().gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  } else {
    gemm_nn_ref(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  if constexpr (std::is_same_v<T, float>) {
    kernels().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  } else {
    gemm_nt_ref(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  }
}

}  // namespace cfp::simd
