#pragma once

#include <cblas.h>

#include <mutex>

extern "C" void openblas_set_num_threads(int);

namespace elastic::detail {

// Pin BLAS to one thread. Multi-threaded GEMM may split reductions
// differently run to run, and bitwise reproducibility is part of the
// contract here; single-threaded OpenBLAS is strictly ordered.
inline void ensure_blas_single_thread() {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
}

// Row-major C = A*B + beta*C with optional transposes, alpha fixed at 1.
inline void sgemm(bool trans_a, bool trans_b, int m, int n, int k,
                  const float* a, int lda, const float* b, int ldb, float beta,
                  float* c, int ldc) {
  ensure_blas_single_thread();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a, lda, b,
              ldb, beta, c, ldc);
}

}  // namespace elastic::detail
