// AVX-512F kernels. Same contract and structure as the AVX2 variant with
// 8-wide lanes and an 8x16 GEMM microkernel.

#include <immintrin.h>

#include <vector>

#include "mpl/kernels.hpp"

namespace mpl::kernels {

namespace {

constexpr i64 MR = 8;
constexpr i64 NR = 16;  // 2 zmm

void pack_b(const double* b, i64 ldb, i64 k, i64 jt, double* panel) {
  for (i64 kk = 0; kk < k; ++kk) {
    const double* src = b + kk * ldb + jt;
    double* dst = panel + kk * NR;
    _mm512_storeu_pd(dst, _mm512_loadu_pd(src));
    _mm512_storeu_pd(dst + 8, _mm512_loadu_pd(src + 8));
  }
}

template <int ROWS>
void micro(i64 k, const double* a, i64 lda, const double* panel, double* c,
           i64 ldc, bool accumulate) {
  __m512d acc[ROWS][2];
  for (int r = 0; r < ROWS; ++r) {
    acc[r][0] = _mm512_setzero_pd();
    acc[r][1] = _mm512_setzero_pd();
  }
  for (i64 kk = 0; kk < k; ++kk) {
    const __m512d b0 = _mm512_loadu_pd(panel + kk * NR);
    const __m512d b1 = _mm512_loadu_pd(panel + kk * NR + 8);
    for (int r = 0; r < ROWS; ++r) {
      const __m512d ar = _mm512_set1_pd(a[r * lda + kk]);
      acc[r][0] = _mm512_fmadd_pd(ar, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_pd(ar, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < ROWS; ++r) {
    double* cr = c + r * ldc;
    if (accumulate) {
      acc[r][0] = _mm512_add_pd(_mm512_loadu_pd(cr), acc[r][0]);
      acc[r][1] = _mm512_add_pd(_mm512_loadu_pd(cr + 8), acc[r][1]);
    }
    _mm512_storeu_pd(cr, acc[r][0]);
    _mm512_storeu_pd(cr + 8, acc[r][1]);
  }
}

void gemm_nn_avx512(i64 m, i64 n, i64 k, const double* a, i64 lda,
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
    scalar_impl().gemm_nn(m, n - n_main, k, a, lda, b + n_main, ldb,
                          c + n_main, ldc, accumulate);
  }
}

void add_avx512(const double* a, const double* b, double* out, i64 n) {
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm512_storeu_pd(out + i,
                     _mm512_add_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i)));
  }
  if (i < n) scalar_impl().add(a + i, b + i, out + i, n - i);
}

void sub_avx512(const double* a, const double* b, double* out, i64 n) {
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm512_storeu_pd(out + i,
                     _mm512_sub_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i)));
  }
  if (i < n) scalar_impl().sub(a + i, b + i, out + i, n - i);
}

void scale_avx512(const double* a, double alpha, double* out, i64 n) {
  const __m512d va = _mm512_set1_pd(alpha);
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm512_storeu_pd(out + i, _mm512_mul_pd(_mm512_loadu_pd(a + i), va));
  }
  if (i < n) scalar_impl().scale(a + i, alpha, out + i, n - i);
}

void axpy_avx512(double alpha, const double* x, double* y, i64 n) {
  const __m512d va = _mm512_set1_pd(alpha);
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm512_storeu_pd(
        y + i, _mm512_fmadd_pd(va, _mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i)));
  }
  if (i < n) scalar_impl().axpy(alpha, x + i, y + i, n - i);
}

void colsum_avx512(const double* a, i64 rows, i64 cols, i64 lda, double* out,
                   bool accumulate) {
  const i64 main = cols - cols % 8;
  if (!accumulate) {
    for (i64 j = 0; j < cols; ++j) out[j] = 0.0;
  }
  for (i64 r = 0; r < rows; ++r) {
    const double* ar = a + r * lda;
    i64 j = 0;
    for (; j < main; j += 8) {
      _mm512_storeu_pd(out + j,
                       _mm512_add_pd(_mm512_loadu_pd(out + j), _mm512_loadu_pd(ar + j)));
    }
    for (; j < cols; ++j) out[j] += ar[j];
  }
}

void adam_update_avx512(double* p, double* m, double* v, const double* g,
                        i64 n, double lr, double b1, double b2, double eps,
                        double bc1, double bc2) {
  const __m512d vb1 = _mm512_set1_pd(b1);
  const __m512d vb2 = _mm512_set1_pd(b2);
  const __m512d vc1 = _mm512_set1_pd(1.0 - b1);
  const __m512d vc2 = _mm512_set1_pd(1.0 - b2);
  const __m512d vlr = _mm512_set1_pd(lr);
  const __m512d veps = _mm512_set1_pd(eps);
  const __m512d vbc1 = _mm512_set1_pd(bc1);
  const __m512d vbc2 = _mm512_set1_pd(bc2);
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d gi = _mm512_loadu_pd(g + i);
    __m512d mi = _mm512_loadu_pd(m + i);
    __m512d vi = _mm512_loadu_pd(v + i);
    mi = _mm512_add_pd(_mm512_mul_pd(vb1, mi), _mm512_mul_pd(vc1, gi));
    vi = _mm512_add_pd(_mm512_mul_pd(vb2, vi),
                       _mm512_mul_pd(vc2, _mm512_mul_pd(gi, gi)));
    _mm512_storeu_pd(m + i, mi);
    _mm512_storeu_pd(v + i, vi);
    const __m512d num = _mm512_mul_pd(vlr, _mm512_mul_pd(mi, vbc1));
    const __m512d den =
        _mm512_add_pd(_mm512_sqrt_pd(_mm512_mul_pd(vi, vbc2)), veps);
    _mm512_storeu_pd(p + i,
                     _mm512_sub_pd(_mm512_loadu_pd(p + i), _mm512_div_pd(num, den)));
  }
  if (i < n) {
    scalar_impl().adam_update(p + i, m + i, v + i, g + i, n - i, lr, b1, b2,
                              eps, bc1, bc2);
  }
}

}  // namespace

const Impl& avx512_impl() {
  static const Impl impl{gemm_nn_avx512, add_avx512,  sub_avx512,
                         scale_avx512,   axpy_avx512, colsum_avx512,
                         adam_update_avx512};
  return impl;
}

}  // namespace mpl::kernels
