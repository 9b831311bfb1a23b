// NEON kernels (aarch64). 2-wide f64 lanes, 4x8 GEMM microkernel, same
// per-element contract as the other variants. vfmaq_f64 is a correctly
// rounded fused multiply-add, so bit-exactness against the scalar reference
// holds by the same argument as on x86.

#include <arm_neon.h>

#include <vector>

#include "mpl/kernels.hpp"

namespace mpl::kernels {

namespace {

constexpr i64 MR = 4;
constexpr i64 NR = 8;  // 4 q-registers

void pack_b(const double* b, i64 ldb, i64 k, i64 jt, double* panel) {
  for (i64 kk = 0; kk < k; ++kk) {
    const double* src = b + kk * ldb + jt;
    double* dst = panel + kk * NR;
    vst1q_f64(dst, vld1q_f64(src));
    vst1q_f64(dst + 2, vld1q_f64(src + 2));
    vst1q_f64(dst + 4, vld1q_f64(src + 4));
    vst1q_f64(dst + 6, vld1q_f64(src + 6));
  }
}

template <int ROWS>
void micro(i64 k, const double* a, i64 lda, const double* panel, double* c,
           i64 ldc, bool accumulate) {
  float64x2_t acc[ROWS][4];
  for (int r = 0; r < ROWS; ++r) {
    for (int q = 0; q < 4; ++q) acc[r][q] = vdupq_n_f64(0.0);
  }
  for (i64 kk = 0; kk < k; ++kk) {
    const float64x2_t b0 = vld1q_f64(panel + kk * NR);
    const float64x2_t b1 = vld1q_f64(panel + kk * NR + 2);
    const float64x2_t b2 = vld1q_f64(panel + kk * NR + 4);
    const float64x2_t b3 = vld1q_f64(panel + kk * NR + 6);
    for (int r = 0; r < ROWS; ++r) {
      const float64x2_t ar = vdupq_n_f64(a[r * lda + kk]);
      acc[r][0] = vfmaq_f64(acc[r][0], ar, b0);
      acc[r][1] = vfmaq_f64(acc[r][1], ar, b1);
      acc[r][2] = vfmaq_f64(acc[r][2], ar, b2);
      acc[r][3] = vfmaq_f64(acc[r][3], ar, b3);
    }
  }
  for (int r = 0; r < ROWS; ++r) {
    double* cr = c + r * ldc;
    for (int q = 0; q < 4; ++q) {
      float64x2_t val = acc[r][q];
      if (accumulate) val = vaddq_f64(vld1q_f64(cr + 2 * q), val);
      vst1q_f64(cr + 2 * q, val);
    }
  }
}

void gemm_nn_neon(i64 m, i64 n, i64 k, const double* a, i64 lda,
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

void add_neon(const double* a, const double* b, double* out, i64 n) {
  i64 i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  if (i < n) scalar_impl().add(a + i, b + i, out + i, n - i);
}

void sub_neon(const double* a, const double* b, double* out, i64 n) {
  i64 i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  if (i < n) scalar_impl().sub(a + i, b + i, out + i, n - i);
}

void scale_neon(const double* a, double alpha, double* out, i64 n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  i64 i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), va));
  }
  if (i < n) scalar_impl().scale(a + i, alpha, out + i, n - i);
}

void axpy_neon(double alpha, const double* x, double* y, i64 n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  i64 i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  if (i < n) scalar_impl().axpy(alpha, x + i, y + i, n - i);
}

void colsum_neon(const double* a, i64 rows, i64 cols, i64 lda, double* out,
                 bool accumulate) {
  const i64 main = cols - cols % 2;
  if (!accumulate) {
    for (i64 j = 0; j < cols; ++j) out[j] = 0.0;
  }
  for (i64 r = 0; r < rows; ++r) {
    const double* ar = a + r * lda;
    i64 j = 0;
    for (; j < main; j += 2) {
      vst1q_f64(out + j, vaddq_f64(vld1q_f64(out + j), vld1q_f64(ar + j)));
    }
    for (; j < cols; ++j) out[j] += ar[j];
  }
}

void adam_update_neon(double* p, double* m, double* v, const double* g, i64 n,
                      double lr, double b1, double b2, double eps, double bc1,
                      double bc2) {
  const float64x2_t vb1 = vdupq_n_f64(b1);
  const float64x2_t vb2 = vdupq_n_f64(b2);
  const float64x2_t vc1 = vdupq_n_f64(1.0 - b1);
  const float64x2_t vc2 = vdupq_n_f64(1.0 - b2);
  const float64x2_t vlr = vdupq_n_f64(lr);
  const float64x2_t veps = vdupq_n_f64(eps);
  const float64x2_t vbc1 = vdupq_n_f64(bc1);
  const float64x2_t vbc2 = vdupq_n_f64(bc2);
  i64 i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t gi = vld1q_f64(g + i);
    float64x2_t mi = vld1q_f64(m + i);
    float64x2_t vi = vld1q_f64(v + i);
    mi = vaddq_f64(vmulq_f64(vb1, mi), vmulq_f64(vc1, gi));
    vi = vaddq_f64(vmulq_f64(vb2, vi), vmulq_f64(vc2, vmulq_f64(gi, gi)));
    vst1q_f64(m + i, mi);
    vst1q_f64(v + i, vi);
    const float64x2_t num = vmulq_f64(vlr, vmulq_f64(mi, vbc1));
    const float64x2_t den = vaddq_f64(vsqrtq_f64(vmulq_f64(vi, vbc2)), veps);
    vst1q_f64(p + i, vsubq_f64(vld1q_f64(p + i), vdivq_f64(num, den)));
  }
  if (i < n) {
    scalar_impl().adam_update(p + i, m + i, v + i, g + i, n - i, lr, b1, b2,
                              eps, bc1, bc2);
  }
}

}  // namespace

const Impl& neon_impl() {
  static const Impl impl{gemm_nn_neon, add_neon,    sub_neon,
                         scale_neon,   axpy_neon,   colsum_neon,
                         adam_update_neon};
  return impl;
}

}  // namespace mpl::kernels
