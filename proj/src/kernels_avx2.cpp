// AVX2+FMA kernels. Compiled with -mavx2 -mfma; only reached when cpuid
// reports both. Lanes carry independent output elements, so results are
// bit-identical to the scalar reference (see kernels.hpp contract).

#include <immintrin.h>

#include <vector>

#include "mpl/kernels.hpp"

namespace mpl::kernels {

namespace {

constexpr i64 MR = 4;  // rows per microkernel
constexpr i64 NR = 8;  // columns per microkernel (2 ymm)

// B panel packed as k x NR, contiguous by k.
void pack_b(const double* b, i64 ldb, i64 k, i64 jt, double* panel) {
  for (i64 kk = 0; kk < k; ++kk) {
    const double* src = b + kk * ldb + jt;
    double* dst = panel + kk * NR;
    _mm256_storeu_pd(dst, _mm256_loadu_pd(src));
    _mm256_storeu_pd(dst + 4, _mm256_loadu_pd(src + 4));
  }
}

template <int ROWS>
void micro(i64 k, const double* a, i64 lda, const double* panel, double* c,
           i64 ldc, bool accumulate) {
  __m256d acc[ROWS][2];
  for (int r = 0; r < ROWS; ++r) {
    acc[r][0] = _mm256_setzero_pd();
    acc[r][1] = _mm256_setzero_pd();
  }
  for (i64 kk = 0; kk < k; ++kk) {
    const __m256d b0 = _mm256_loadu_pd(panel + kk * NR);
    const __m256d b1 = _mm256_loadu_pd(panel + kk * NR + 4);
    for (int r = 0; r < ROWS; ++r) {
      const __m256d ar = _mm256_set1_pd(a[r * lda + kk]);
      acc[r][0] = _mm256_fmadd_pd(ar, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(ar, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < ROWS; ++r) {
    double* cr = c + r * ldc;
    if (accumulate) {
      acc[r][0] = _mm256_add_pd(_mm256_loadu_pd(cr), acc[r][0]);
      acc[r][1] = _mm256_add_pd(_mm256_loadu_pd(cr + 4), acc[r][1]);
    }
    _mm256_storeu_pd(cr, acc[r][0]);
    _mm256_storeu_pd(cr + 4, acc[r][1]);
  }
}

void gemm_nn_avx2(i64 m, i64 n, i64 k, const double* a, i64 lda,
                  const double* b, i64 ldb, double* c, i64 ldc,
                  bool accumulate) {
  thread_local std::vector<double> panel;
  const i64 n_main = n - n % NR;
  if (n_main > 0) {
    if (i64(panel.size()) < k * NR) panel.resize(k * NR);
    for (i64 jt = 0; jt < n_main; jt += NR) {
      pack_b(b, ldb, k, jt, panel.data());
      i64 i = 0;
      for (; i + MR <= m; i += MR) {
        micro<MR>(k, a + i * lda, lda, panel.data(), c + i * ldc + jt, ldc,
                  accumulate);
      }
      for (; i < m; ++i) {
        micro<1>(k, a + i * lda, lda, panel.data(), c + i * ldc + jt, ldc,
                 accumulate);
      }
    }
  }
  if (n_main < n) {
    // Column tail: defer to the scalar reference on the remaining strip.
    scalar_impl().gemm_nn(m, n - n_main, k, a, lda, b + n_main, ldb,
                          c + n_main, ldc, accumulate);
  }
}

void add_avx2(const double* a, const double* b, double* out, i64 n) {
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  if (i < n) scalar_impl().add(a + i, b + i, out + i, n - i);
}

void sub_avx2(const double* a, const double* b, double* out, i64 n) {
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i,
                     _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  if (i < n) scalar_impl().sub(a + i, b + i, out + i, n - i);
}

void scale_avx2(const double* a, double alpha, double* out, i64 n) {
  const __m256d va = _mm256_set1_pd(alpha);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), va));
  }
  if (i < n) scalar_impl().scale(a + i, alpha, out + i, n - i);
}

void axpy_avx2(double alpha, const double* x, double* y, i64 n) {
  const __m256d va = _mm256_set1_pd(alpha);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  if (i < n) scalar_impl().axpy(alpha, x + i, y + i, n - i);
}

void colsum_avx2(const double* a, i64 rows, i64 cols, i64 lda, double* out,
                 bool accumulate) {
  const i64 main = cols - cols % 4;
  if (!accumulate) {
    for (i64 j = 0; j < cols; ++j) out[j] = 0.0;
  }
  for (i64 r = 0; r < rows; ++r) {
    const double* ar = a + r * lda;
    i64 j = 0;
    for (; j < main; j += 4) {
      _mm256_storeu_pd(out + j,
                       _mm256_add_pd(_mm256_loadu_pd(out + j), _mm256_loadu_pd(ar + j)));
    }
    for (; j < cols; ++j) out[j] += ar[j];
  }
}

void adam_update_avx2(double* p, double* m, double* v, const double* g, i64 n,
                      double lr, double b1, double b2, double eps, double bc1,
                      double bc2) {
  // Mul/add kept unfused to match the scalar reference expression exactly.
  const __m256d vb1 = _mm256_set1_pd(b1);
  const __m256d vb2 = _mm256_set1_pd(b2);
  const __m256d vc1 = _mm256_set1_pd(1.0 - b1);
  const __m256d vc2 = _mm256_set1_pd(1.0 - b2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vbc1 = _mm256_set1_pd(bc1);
  const __m256d vbc2 = _mm256_set1_pd(bc2);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    __m256d mi = _mm256_loadu_pd(m + i);
    __m256d vi = _mm256_loadu_pd(v + i);
    mi = _mm256_add_pd(_mm256_mul_pd(vb1, mi), _mm256_mul_pd(vc1, gi));
    vi = _mm256_add_pd(_mm256_mul_pd(vb2, vi),
                       _mm256_mul_pd(vc2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d num = _mm256_mul_pd(vlr, _mm256_mul_pd(mi, vbc1));
    const __m256d den =
        _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, vbc2)), veps);
    _mm256_storeu_pd(p + i,
                     _mm256_sub_pd(_mm256_loadu_pd(p + i), _mm256_div_pd(num, den)));
  }
  if (i < n) {
    scalar_impl().adam_update(p + i, m + i, v + i, g + i, n - i, lr, b1, b2,
                              eps, bc1, bc2);
  }
}

}  // namespace

const Impl& avx2_impl() {
  static const Impl impl{gemm_nn_avx2, add_avx2,  sub_avx2,    scale_avx2,
                         axpy_avx2,    colsum_avx2, adam_update_avx2};
  return impl;
}

}  // namespace mpl::kernels
