#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "mpl/kernels.hpp"
#include "mpl/rng.hpp"

using namespace mpl;
using namespace mpl::kernels;

namespace {

// Plain mul-add oracle, no fma, independent of the kernel contract.
void gemm_oracle(bool ta, bool tb, i64 m, i64 n, i64 k, const double* a,
                 i64 lda, const double* b, i64 ldb, double* c, i64 ldc,
                 bool acc) {
  for (i64 i = 0; i < m; ++i) {
    for (i64 j = 0; j < n; ++j) {
      double s = 0.0;
      for (i64 kk = 0; kk < k; ++kk) {
        const double av = ta ? a[kk * lda + i] : a[i * lda + kk];
        const double bv = tb ? b[j * ldb + kk] : b[kk * ldb + j];
        s += av * bv;
      }
      c[i * ldc + j] = acc ? c[i * ldc + j] + s : s;
    }
  }
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out{Isa::scalar};
  for (Isa isa : {Isa::avx2, Isa::avx512, Isa::neon}) {
    if (isa_supported(isa)) out.push_back(isa);
  }
  return out;
}

struct IsaGuard {
  Isa saved;
  IsaGuard() : saved(active_isa()) {}
  ~IsaGuard() { force_isa(saved); }
};

}  // namespace

TEST_CASE("gemm matches the mul-add oracle in all forms") {
  IsaGuard guard;
  Rng rng(11);
  for (Isa isa : available_isas()) {
    force_isa(isa);
    for (int rep = 0; rep < 12; ++rep) {
      const i64 m = 1 + i64(rng.uniform_int(40));
      const i64 n = 1 + i64(rng.uniform_int(40));
      const i64 k = 1 + i64(rng.uniform_int(40));
      for (int form = 0; form < 3; ++form) {
        const bool ta = form == 1, tb = form == 2;
        const i64 am = ta ? k : m, ak = ta ? m : k;
        const i64 bm = tb ? n : k, bk = tb ? k : n;
        std::vector<double> a(size_t(am * ak)), b(size_t(bm * bk));
        for (auto& x : a) x = rng.uniform(-2, 2);
        for (auto& x : b) x = rng.uniform(-2, 2);
        std::vector<double> c(size_t(m * n)), ref(size_t(m * n));
        for (i64 i = 0; i < m * n; ++i) {
          c[size_t(i)] = ref[size_t(i)] = rng.uniform(-1, 1);
        }
        gemm(ta, tb, m, n, k, a.data(), ak, b.data(), bk, c.data(), n, true);
        gemm_oracle(ta, tb, m, n, k, a.data(), ak, b.data(), bk, ref.data(), n,
                    true);
        for (i64 i = 0; i < m * n; ++i) {
          CAPTURE(isa_name(isa));
          REQUIRE(c[size_t(i)] ==
                  doctest::Approx(ref[size_t(i)]).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("simd gemm variants are bit-identical to the scalar reference") {
  IsaGuard guard;
  Rng rng(42);
  const auto isas = available_isas();
  for (int rep = 0; rep < 25; ++rep) {
    const i64 m = 1 + i64(rng.uniform_int(70));
    const i64 n = 1 + i64(rng.uniform_int(70));
    const i64 k = 1 + i64(rng.uniform_int(70));
    for (int form = 0; form < 3; ++form) {
      const bool ta = form == 1, tb = form == 2;
      const i64 am = ta ? k : m, ak = ta ? m : k;
      const i64 bm = tb ? n : k, bk = tb ? k : n;
      std::vector<double> a(size_t(am * ak)), b(size_t(bm * bk));
      for (auto& x : a) x = rng.uniform(-2, 2);
      for (auto& x : b) x = rng.uniform(-2, 2);
      for (bool acc : {false, true}) {
        std::vector<double> init(size_t(m * n));
        for (auto& x : init) x = rng.uniform(-1, 1);
        std::vector<double> ref;
        for (size_t vi = 0; vi < isas.size(); ++vi) {
          force_isa(isas[vi]);
          std::vector<double> c = init;
          gemm(ta, tb, m, n, k, a.data(), ak, b.data(), bk, c.data(), n, acc);
          if (vi == 0) {
            ref = std::move(c);
          } else {
            CAPTURE(isa_name(isas[vi]));
            CAPTURE(form);
            REQUIRE(std::memcmp(ref.data(), c.data(), size_t(m * n) * 8) == 0);
          }
        }
      }
    }
  }
}

TEST_CASE("gemm is independent of the thread count") {
  IsaGuard guard;
  Rng rng(7);
  std::vector<double> a(size_t(300 * 200)), b(size_t(200 * 250));
  for (auto& x : a) x = rng.uniform(-1, 1);
  for (auto& x : b) x = rng.uniform(-1, 1);
  std::vector<double> c1(size_t(300 * 250)), c3(size_t(300 * 250));
  set_thread_count(1);
  gemm(false, false, 300, 250, 200, a.data(), 200, b.data(), 250, c1.data(),
       250, false);
  set_thread_count(3);
  gemm(false, false, 300, 250, 200, a.data(), 200, b.data(), 250, c3.data(),
       250, false);
  set_thread_count(1);
  REQUIRE(std::memcmp(c1.data(), c3.data(), c1.size() * 8) == 0);
}

TEST_CASE("elementwise kernels match references across variants") {
  IsaGuard guard;
  Rng rng(5);
  const i64 n = 1003;  // odd length exercises the tails
  std::vector<double> a(size_t(n)), b(size_t(n));
  for (auto& x : a) x = rng.uniform(-3, 3);
  for (auto& x : b) x = rng.uniform(-3, 3);

  for (Isa isa : available_isas()) {
    force_isa(isa);
    CAPTURE(isa_name(isa));
    std::vector<double> out(size_t(n));
    add(a.data(), b.data(), out.data(), n);
    for (i64 i = 0; i < n; ++i) {
      REQUIRE(out[size_t(i)] == a[size_t(i)] + b[size_t(i)]);
    }
    sub(a.data(), b.data(), out.data(), n);
    for (i64 i = 0; i < n; ++i) {
      REQUIRE(out[size_t(i)] == a[size_t(i)] - b[size_t(i)]);
    }
    scale(a.data(), 1.5, out.data(), n);
    for (i64 i = 0; i < n; ++i) {
      REQUIRE(out[size_t(i)] == a[size_t(i)] * 1.5);
    }
    out = b;
    axpy(0.25, a.data(), out.data(), n);
    for (i64 i = 0; i < n; ++i) {
      REQUIRE(out[size_t(i)] == std::fma(0.25, a[size_t(i)], b[size_t(i)]));
    }
  }
}

TEST_CASE("colsum accumulates rows in ascending order") {
  IsaGuard guard;
  Rng rng(9);
  const i64 rows = 37, cols = 21;
  std::vector<double> a(size_t(rows * cols));
  for (auto& x : a) x = rng.uniform(-1, 1);
  std::vector<double> want(size_t(cols), 0.5);
  for (i64 r = 0; r < rows; ++r) {
    for (i64 j = 0; j < cols; ++j) want[size_t(j)] += a[size_t(r * cols + j)];
  }
  for (Isa isa : available_isas()) {
    force_isa(isa);
    std::vector<double> out(size_t(cols), 0.5);
    colsum(a.data(), rows, cols, cols, out.data(), true);
    CAPTURE(isa_name(isa));
    REQUIRE(std::memcmp(out.data(), want.data(), size_t(cols) * 8) == 0);
  }
}

TEST_CASE("adam_update variants agree bit-for-bit and match the formula") {
  IsaGuard guard;
  Rng rng(13);
  const i64 n = 101;
  std::vector<double> p0(size_t(n)), m0(size_t(n), 0.0), v0(size_t(n), 0.0),
      g(size_t(n));
  for (auto& x : p0) x = rng.uniform(-1, 1);
  for (auto& x : g) x = rng.uniform(-1, 1);

  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double bc1 = 1.0 / (1.0 - b1), bc2 = 1.0 / (1.0 - b2);

  const auto isas = available_isas();
  std::vector<double> ref_p, ref_m, ref_v;
  for (size_t vi = 0; vi < isas.size(); ++vi) {
    force_isa(isas[vi]);
    std::vector<double> p = p0, m = m0, v = v0;
    adam_update(p.data(), m.data(), v.data(), g.data(), n, lr, b1, b2, eps,
                bc1, bc2);
    if (vi == 0) {
      ref_p = p;
      ref_m = m;
      ref_v = v;
      for (i64 i = 0; i < n; ++i) {
        const double gi = g[size_t(i)];
        const double mi = 0.1 * gi;
        const double viv = 0.001 * gi * gi;
        const double step = lr * (mi * bc1) / (std::sqrt(viv * bc2) + eps);
        REQUIRE(p[size_t(i)] ==
                doctest::Approx(p0[size_t(i)] - step).epsilon(1e-14));
      }
    } else {
      CAPTURE(isa_name(isas[vi]));
      REQUIRE(std::memcmp(ref_p.data(), p.data(), size_t(n) * 8) == 0);
      REQUIRE(std::memcmp(ref_m.data(), m.data(), size_t(n) * 8) == 0);
      REQUIRE(std::memcmp(ref_v.data(), v.data(), size_t(n) * 8) == 0);
    }
  }
}

TEST_CASE("forcing an unsupported variant raises") {
#if !defined(__aarch64__)
  REQUIRE_THROWS_AS(force_isa(Isa::neon), Error);
#else
  REQUIRE_THROWS_AS(force_isa(Isa::avx2), Error);
#endif
}
