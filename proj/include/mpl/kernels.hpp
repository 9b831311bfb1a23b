#pragma once

#include <functional>

#include "mpl/common.hpp"

namespace mpl::kernels {

// Dense f64 kernels with scalar reference implementations and SIMD variants
// (AVX2 / AVX-512 on x86-64, NEON on aarch64) selected at runtime.
//
// Every variant is bit-exact against the scalar reference. This holds by
// construction: per output element the arithmetic is a single fused
// multiply-add chain over the reduction index in ascending order (fma is
// correctly rounded in both libm and hardware), and SIMD lanes only spread
// *independent* output elements, never one reduction. The equivalence suite
// asserts exact equality, and runtime dispatch therefore never changes
// numerical results.

enum class Isa { scalar, avx2, avx512, neon };

const char* isa_name(Isa isa);
bool isa_supported(Isa isa);
// Best supported ISA, or the one forced via force_isa()/MPL_KERNELS env var.
Isa active_isa();
void force_isa(Isa isa);

int thread_count();
void set_thread_count(int n);

// Runs fn(begin, end) over a partition of [0, n) across the worker pool.
// Partitioning is by disjoint index ranges, so any kernel built on it is
// independent of the thread count.
void parallel_for(i64 n, i64 grain, const std::function<void(i64, i64)>& fn);

// C = op(A) * op(B), optionally accumulating into C. Matrices are row-major
// with leading dimensions lda/ldb/ldc. op(A) is m x k, op(B) is k x n.
// Contract: each C[i][j] is computed as an fma chain over the reduction index
// in ascending order starting from 0; when accumulate is set the chain result
// is added to the prior C[i][j] with one final add.
void gemm(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, const double* a,
          i64 lda, const double* b, i64 ldb, double* c, i64 ldc,
          bool accumulate);

// Elementwise kernels. All lane-parallel with no reductions, hence trivially
// bit-exact across variants.
void add(const double* a, const double* b, double* out, i64 n);
void sub(const double* a, const double* b, double* out, i64 n);
void scale(const double* a, double alpha, double* out, i64 n);
void axpy(double alpha, const double* x, double* y, i64 n);  // y += alpha * x

// out[j] (+)= sum_r a[r*lda + j]; per-column add chain over rows ascending.
void colsum(const double* a, i64 rows, i64 cols, i64 lda, double* out,
            bool accumulate);

// One Adam update. Per element, evaluated exactly as:
//   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g*g
//   p -= lr * (m*bc1) / (sqrt(v*bc2) + eps)
// where bc1 = 1/(1-b1^t), bc2 = 1/(1-b2^t) are precomputed by the caller.
void adam_update(double* p, double* m, double* v, const double* g, i64 n,
                 double lr, double b1, double b2, double eps, double bc1,
                 double bc2);

// dst (n x m) = src (m x n)^T; plain copy.
void transpose(const double* src, i64 m, i64 n, i64 ld_src, double* dst,
               i64 ld_dst);

// Internal: per-ISA implementation table. Scalar entries double as the
// reference for equivalence tests.
struct Impl {
  void (*gemm_nn)(i64 m, i64 n, i64 k, const double* a, i64 lda,
                  const double* b, i64 ldb, double* c, i64 ldc,
                  bool accumulate);
  void (*add)(const double* a, const double* b, double* out, i64 n);
  void (*sub)(const double* a, const double* b, double* out, i64 n);
  void (*scale)(const double* a, double alpha, double* out, i64 n);
  void (*axpy)(double alpha, const double* x, double* y, i64 n);
  void (*colsum)(const double* a, i64 rows, i64 cols, i64 lda, double* out,
                 bool accumulate);
  void (*adam_update)(double* p, double* m, double* v, const double* g, i64 n,
                      double lr, double b1, double b2, double eps, double bc1,
                      double bc2);
};

const Impl& scalar_impl();
#ifdef MPL_BUILD_AVX2
const Impl& avx2_impl();
#endif
#ifdef MPL_BUILD_AVX512
const Impl& avx512_impl();
#endif
#ifdef MPL_BUILD_NEON
const Impl& neon_impl();
#endif

}  // namespace mpl::kernels
