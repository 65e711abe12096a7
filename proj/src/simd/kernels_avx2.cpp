// Compiled with -mavx2 -mfma; only reached through the dispatch table after a
// CPUID check.

#include <immintrin.h>

#include <cmath>

#include "cfp/simd/kernels.hpp"

namespace cfp::simd {
namespace {

inline double hsum_pd(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline float hsum_ps(__m256 v) {
  __m128 s = _mm_add_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 0x55));
  return _mm_cvtss_f32(s);
}

double dot_f64acc(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 va = _mm256_loadu_ps(a + i);
    const __m256 vb = _mm256_loadu_ps(b + i);
    acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va)),
                           _mm256_cvtps_pd(_mm256_castps256_ps128(vb)), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va, 1)),
                           _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1)), acc1);
  }
  double s = hsum_pd(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

// Four rows per pass so each query load is reused. Each row keeps the same
// two 4-lane accumulators as dot_f64acc, so out[r] is bit-identical to
// dot_f64acc(q, row r). The products are exact in double; only the order of
// the additions could differ, and it does not.
void dot_rows_f64acc(const float* q, const float* rows, std::size_t n_rows, std::size_t dim,
                     double* out) {
  std::size_t r = 0;
  if (dim % 8 == 0) {
    for (; r + 4 <= n_rows; r += 4) {
      const float* rp[4] = {rows + r * dim, rows + (r + 1) * dim, rows + (r + 2) * dim,
                            rows + (r + 3) * dim};
      __m256d lo[4], hi[4];
      for (int t = 0; t < 4; ++t) lo[t] = hi[t] = _mm256_setzero_pd();
      for (std::size_t i = 0; i < dim; i += 8) {
        const __m256 vq = _mm256_loadu_ps(q + i);
        const __m256d qlo = _mm256_cvtps_pd(_mm256_castps256_ps128(vq));
        const __m256d qhi = _mm256_cvtps_pd(_mm256_extractf128_ps(vq, 1));
        for (int t = 0; t < 4; ++t) {
          const __m256 vr = _mm256_loadu_ps(rp[t] + i);
          lo[t] = _mm256_fmadd_pd(qlo, _mm256_cvtps_pd(_mm256_castps256_ps128(vr)), lo[t]);
          hi[t] = _mm256_fmadd_pd(qhi, _mm256_cvtps_pd(_mm256_extractf128_ps(vr, 1)), hi[t]);
        }
      }
      for (int t = 0; t < 4; ++t) out[r + t] = hsum_pd(_mm256_add_pd(lo[t], hi[t]));
    }
  }
  for (; r < n_rows; ++r) out[r] = dot_f64acc(q, rows + r * dim, dim);
}

// MR x 16 register tile over the full k extent.
template <int MR>
inline void tile_nn(std::size_t k, const float* a, std::size_t lda, const float* b,
                    std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  __m256 acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = _mm256_setzero_ps();
    acc[r][1] = _mm256_setzero_ps();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
    const __m256 b1 = _mm256_loadu_ps(b + p * ldb + 8);
    for (int r = 0; r < MR; ++r) {
      const __m256 av = _mm256_broadcast_ss(a + r * lda + p);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    float* crow = c + r * ldc;
    if (accumulate) {
      acc[r][0] = _mm256_add_ps(acc[r][0], _mm256_loadu_ps(crow));
      acc[r][1] = _mm256_add_ps(acc[r][1], _mm256_loadu_ps(crow + 8));
    }
    _mm256_storeu_ps(crow, acc[r][0]);
    _mm256_storeu_ps(crow + 8, acc[r][1]);
  }
}

template <int MR>
inline void tile_nn_8(std::size_t k, const float* a, std::size_t lda, const float* b,
                      std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  __m256 acc[MR];
  for (int r = 0; r < MR; ++r) acc[r] = _mm256_setzero_ps();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
    for (int r = 0; r < MR; ++r) {
      acc[r] = _mm256_fmadd_ps(_mm256_broadcast_ss(a + r * lda + p), b0, acc[r]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    float* crow = c + r * ldc;
    if (accumulate) acc[r] = _mm256_add_ps(acc[r], _mm256_loadu_ps(crow));
    _mm256_storeu_ps(crow, acc[r]);
  }
}

void tile_nn_scalar(std::size_t mr, std::size_t nr, std::size_t k, const float* a,
                    std::size_t lda, const float* b, std::size_t ldb, float* c, std::size_t ldc,
                    bool accumulate) {
  for (std::size_t r = 0; r < mr; ++r) {
    for (std::size_t j = 0; j < nr; ++j) {
      float s = 0.0f;
      for (std::size_t p = 0; p < k; ++p) s = std::fma(a[r * lda + p], b[p * ldb + j], s);
      c[r * ldc + j] = accumulate ? c[r * ldc + j] + s : s;
    }
  }
}

template <int MR>
void row_block_nn(std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
                  std::size_t ldb, float* c, std::size_t ldc, bool accumulate, std::size_t j0) {
  if (j0 + 16 <= n) {
    tile_nn<MR>(k, a, lda, b + j0, ldb, c + j0, ldc, accumulate);
  } else if (j0 + 8 <= n) {
    tile_nn_8<MR>(k, a, lda, b + j0, ldb, c + j0, ldc, accumulate);
    if (j0 + 8 < n) {
      tile_nn_scalar(MR, n - j0 - 8, k, a, lda, b + j0 + 8, ldb, c + j0 + 8, ldc, accumulate);
    }
  } else {
    tile_nn_scalar(MR, n - j0, k, a, lda, b + j0, ldb, c + j0, ldc, accumulate);
  }
}

// Column panels outermost so a k x 16 slice of B stays in L1 while every row
// block of A streams past it.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
             const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  for (std::size_t j0 = 0; j0 < n; j0 += 16) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      row_block_nn<4>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate, j0);
    }
    switch (m - i) {
      case 3:
        row_block_nn<3>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate, j0);
        break;
      case 2:
        row_block_nn<2>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate, j0);
        break;
      case 1:
        row_block_nn<1>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate, j0);
        break;
      default:
        break;
    }
  }
}

// Same summation order as the blocked path of gemm_nt, so an output element
// does not depend on where its row sits in the batch.
inline float dot_ps(const float* x, const float* y, std::size_t k) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t p = 0;
  for (; p + 8 <= k; p += 8) {
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + p), _mm256_loadu_ps(y + p), acc);
  }
  float s = hsum_ps(acc);
  for (; p < k; ++p) s = std::fma(x[p], y[p], s);
  return s;
}

// 2 rows of A against 4 rows of B per pass.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
             const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  const std::size_t k8 = k - k % 8;
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const float* a0 = a + i * lda;
    const float* a1 = a0 + lda;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const float* bj[4] = {b + j * ldb, b + (j + 1) * ldb, b + (j + 2) * ldb, b + (j + 3) * ldb};
      __m256 acc[2][4];
      for (auto& row : acc) {
        for (auto& v : row) v = _mm256_setzero_ps();
      }
      for (std::size_t p = 0; p < k8; p += 8) {
        const __m256 x0 = _mm256_loadu_ps(a0 + p);
        const __m256 x1 = _mm256_loadu_ps(a1 + p);
        for (int t = 0; t < 4; ++t) {
          const __m256 y = _mm256_loadu_ps(bj[t] + p);
          acc[0][t] = _mm256_fmadd_ps(x0, y, acc[0][t]);
          acc[1][t] = _mm256_fmadd_ps(x1, y, acc[1][t]);
        }
      }
      for (int r = 0; r < 2; ++r) {
        const float* ar = r == 0 ? a0 : a1;
        for (int t = 0; t < 4; ++t) {
          float s = hsum_ps(acc[r][t]);
          for (std::size_t p = k8; p < k; ++p) s = std::fma(ar[p], bj[t][p], s);
          float& dst = c[(i + r) * ldc + j + t];
          dst = accumulate ? dst + s : s;
        }
      }
    }
    for (; j < n; ++j) {
      for (int r = 0; r < 2; ++r) {
        const float s = dot_ps(r == 0 ? a0 : a1, b + j * ldb, k);
        float& dst = c[(i + r) * ldc + j];
        dst = accumulate ? dst + s : s;
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const float s = dot_ps(a + i * lda, b + j * ldb, k);
      float& dst = c[i * ldc + j];
      dst = accumulate ? dst + s : s;
    }
  }
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

}  // namespace

const KernelTable& avx2_kernel_table() {
  static const KernelTable table{Isa::Avx2, "avx2", dot_f64acc, dot_rows_f64acc,
                                 gemm_nn,   gemm_nt, axpy};
  return table;
}

}  // namespace cfp::simd
