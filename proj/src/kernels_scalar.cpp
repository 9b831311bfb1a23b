// Scalar reference kernels. These define the numerical contract the SIMD
// variants are tested against, so keep the accumulation order obvious: one
// fma chain per output element, reduction index ascending.

#include <cmath>

#include "mpl/kernels.hpp"

namespace mpl::kernels {

namespace {

void gemm_nn_scalar(i64 m, i64 n, i64 k, const double* a, i64 lda,
                    const double* b, i64 ldb, double* c, i64 ldc,
                    bool accumulate) {
  for (i64 i = 0; i < m; ++i) {
    const double* ai = a + i * lda;
    double* ci = c + i * ldc;
    for (i64 j = 0; j < n; ++j) {
      double s = 0.0;
      for (i64 kk = 0; kk < k; ++kk) {
        s = std::fma(ai[kk], b[kk * ldb + j], s);
      }
      ci[j] = accumulate ? ci[j] + s : s;
    }
  }
}

void add_scalar(const double* a, const double* b, double* out, i64 n) {
  for (i64 i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, i64 n) {
  for (i64 i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void scale_scalar(const double* a, double alpha, double* out, i64 n) {
  for (i64 i = 0; i < n; ++i) out[i] = a[i] * alpha;
}

void axpy_scalar(double alpha, const double* x, double* y, i64 n) {
  for (i64 i = 0; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void colsum_scalar(const double* a, i64 rows, i64 cols, i64 lda, double* out,
                   bool accumulate) {
  if (!accumulate) {
    for (i64 j = 0; j < cols; ++j) out[j] = 0.0;
  }
  for (i64 r = 0; r < rows; ++r) {
    const double* ar = a + r * lda;
    for (i64 j = 0; j < cols; ++j) out[j] += ar[j];
  }
}

void adam_update_scalar(double* p, double* m, double* v, const double* g,
                        i64 n, double lr, double b1, double b2, double eps,
                        double bc1, double bc2) {
  for (i64 i = 0; i < n; ++i) {
    const double gi = g[i];
    m[i] = b1 * m[i] + (1.0 - b1) * gi;
    v[i] = b2 * v[i] + (1.0 - b2) * (gi * gi);
    p[i] -= lr * (m[i] * bc1) / (std::sqrt(v[i] * bc2) + eps);
  }
}

}  // namespace

const Impl& scalar_impl() {
  static const Impl impl{gemm_nn_scalar, add_scalar,    sub_scalar,
                         scale_scalar,   axpy_scalar,   colsum_scalar,
                         adam_update_scalar};
  return impl;
}

}  // namespace mpl::kernels
