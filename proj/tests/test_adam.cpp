#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mpl/adam.hpp"
#include "mpl/rng.hpp"

using namespace mpl;

namespace {

// Textbook Adam, one tensor, written independently.
struct AdamOracle {
  std::vector<double> m, v;
  i64 t = 0;
  double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  explicit AdamOracle(size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& p, const std::vector<double>& g, double lr) {
    t += 1;
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mhat = m[i] / (1 - std::pow(b1, double(t)));
      const double vhat = v[i] / (1 - std::pow(b2, double(t)));
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

}  // namespace

TEST_CASE("zero gradients leave parameters unchanged and advance t") {
  ParamSet params;
  params.add("w", Tensor::from({3}, {0.5, -1.5, 2.0}));
  ParamSet grads = params.zeros_like();
  AdamState st(params);
  adam_step(params, grads, st, 0.01);
  REQUIRE(st.t == 1);
  REQUIRE(params.get("w")[0] == 0.5);
  REQUIRE(params.get("w")[1] == -1.5);
  REQUIRE(params.get("w")[2] == 2.0);
}

TEST_CASE("bias-corrected first step is approximately -lr * sign(g)") {
  ParamSet params;
  params.add("p", Tensor::from({1}, {0.0}));
  ParamSet grads = params.zeros_like();
  grads.get("p")[0] = 1.0;
  AdamState st(params);
  adam_step(params, grads, st, 0.001);
  // closed form: -lr * 1 / (1 + eps)
  REQUIRE(params.get("p")[0] ==
          doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
  REQUIRE(params.get("p")[0] == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("consecutive steps with constant gradient match the loop oracle") {
  Rng rng(3);
  const size_t n = 17;
  std::vector<double> p0(n), g0(n);
  for (auto& x : p0) x = rng.uniform(-1, 1);
  for (auto& x : g0) x = rng.uniform(-1, 1);

  ParamSet params;
  params.add("p", Tensor::from({i64(n)}, std::vector<double>(p0)));
  ParamSet grads = params.zeros_like();
  std::memcpy(grads.get("p").data(), g0.data(), n * 8);
  AdamState st(params);

  AdamOracle oracle(n);
  std::vector<double> ref = p0;
  for (int step = 0; step < 5; ++step) {
    adam_step(params, grads, st, 0.05);
    oracle.step(ref, g0, 0.05);
    for (size_t i = 0; i < n; ++i) {
      REQUIRE(params.get("p")[i64(i)] ==
              doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
  REQUIRE(st.t == 5);
}

TEST_CASE("shape mismatches are rejected") {
  ParamSet params;
  params.add("p", Tensor({3}));
  AdamState st(params);
  ParamSet bad;
  bad.add("p", Tensor({4}));
  REQUIRE_THROWS_AS(adam_step(params, bad, st, 0.1), Error);

  ParamSet renamed;
  renamed.add("q", Tensor({3}));
  REQUIRE_THROWS_AS(adam_step(params, renamed, st, 0.1), Error);
}

TEST_CASE("second moment stays non-negative") {
  Rng rng(5);
  ParamSet params;
  params.add("p", Tensor({64}));
  ParamSet grads = params.zeros_like();
  AdamState st(params);
  for (int step = 0; step < 20; ++step) {
    for (i64 i = 0; i < 64; ++i) grads.get("p")[i] = rng.uniform(-2, 2);
    adam_step(params, grads, st, 0.01);
    for (i64 i = 0; i < 64; ++i) REQUIRE(st.v.get("p")[i] >= 0.0);
  }
}
