#include "cfp/simd/kernels.hpp"

namespace cfp::simd {
namespace {

double dot_f64acc(const float* a, const float* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

void dot_rows_f64acc(const float* q, const float* rows, std::size_t n_rows, std::size_t dim,
                     double* out) {
  for (std::size_t r = 0; r < n_rows; ++r) out[r] = dot_f64acc(q, rows + r * dim, dim);
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
             const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  gemm_nn_ref<float>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
             const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  gemm_nt_ref<float>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::Scalar, "scalar", dot_f64acc, dot_rows_f64acc,
                                 gemm_nn,     gemm_nt,  axpy};
  return table;
}

}  // namespace cfp::simd
