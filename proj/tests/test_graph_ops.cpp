#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mpl/gradcheck.hpp"
#include "mpl/graph.hpp"
#include "mpl/rng.hpp"

using namespace mpl;

namespace {

ParamSet random_params(std::vector<std::pair<std::string, std::vector<i64>>> spec,
                       u64 seed) {
  Rng rng(seed);
  ParamSet ps;
  for (auto& [name, shape] : spec) {
    Tensor t(shape);
    for (i64 i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    ps.add(name, std::move(t));
  }
  return ps;
}

// grad_check driver for a loss built from a single parameter "p".
double check_unary(const std::function<int(Graph&, int)>& body, ParamSet& ps,
                   double h = 1e-6) {
  auto fn = [&](const ParamSet& params, ParamSet* grads) {
    Graph g(&params);
    const int loss = body(g, g.param("p"));
    if (grads) g.backward(loss, *grads);
    return g.value(loss)[0];
  };
  return grad_check(fn, ps, h).max_rel_err;
}

}  // namespace

TEST_CASE("softmax of a constant row is uniform") {
  Graph g;
  const int out = g.softmax(g.input(Tensor::from({1, 4}, {0, 0, 0, 0})));
  for (i64 i = 0; i < 4; ++i) REQUIRE(g.value(out)[i] == 0.25);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(3);
  Tensor x({16, 9});
  for (i64 i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-30.0, 30.0);
  Graph g;
  const int out = g.softmax(g.input(std::move(x)));
  for (i64 r = 0; r < 16; ++r) {
    double s = 0.0;
    for (i64 j = 0; j < 9; ++j) s += g.value(out).at(r, j);
    REQUIRE(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("layernorm matches the hand-evaluated formula on [1,2,3]") {
  Graph g;
  const int x = g.input(Tensor::from({1, 3}, {1, 2, 3}));
  const int gain = g.input(Tensor::full({3}, 1.0));
  const int bias = g.input(Tensor({3}));
  const int out = g.layernorm(x, gain, bias);
  // mean 2, population variance 2/3, rstd = 1/sqrt(2/3)
  const double rstd = 1.0 / std::sqrt(2.0 / 3.0);
  REQUIRE(g.value(out)[0] == doctest::Approx(-rstd).epsilon(1e-15));
  REQUIRE(g.value(out)[1] == doctest::Approx(0.0).epsilon(1e-15));
  REQUIRE(g.value(out)[2] == doctest::Approx(rstd).epsilon(1e-15));

  // normalization identity: mean 0, variance 1 before gain/bias
  double mean = 0.0, var = 0.0;
  for (i64 j = 0; j < 3; ++j) mean += g.value(out)[j];
  mean /= 3.0;
  for (i64 j = 0; j < 3; ++j) {
    var += (g.value(out)[j] - mean) * (g.value(out)[j] - mean);
  }
  var /= 3.0;
  REQUIRE(std::abs(mean) < 1e-9);
  REQUIRE(std::abs(var - 1.0) < 1e-9);
}

TEST_CASE("matmul with the identity is the identity") {
  Rng rng(4);
  Tensor a({3, 3});
  for (i64 i = 0; i < 9; ++i) a[i] = rng.uniform(-2, 2);
  Tensor eye({3, 3});
  for (i64 i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Graph g;
  const int out = g.matmul(g.input(eye), g.input(a));
  REQUIRE(std::memcmp(g.value(out).data(), a.data(), 9 * 8) == 0);
}

TEST_CASE("shape mismatches name both shapes") {
  Graph g;
  const int a = g.input(Tensor({2, 3}));
  const int b = g.input(Tensor({4, 5}));
  try {
    g.matmul(a, b);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::shape_mismatch);
    REQUIRE(std::string(e.what()).find("[2x3]") != std::string::npos);
    REQUIRE(std::string(e.what()).find("[4x5]") != std::string::npos);
  }
  REQUIRE_THROWS_AS(g.add(a, b), Error);
}

TEST_CASE("non-finite forward values raise") {
  Graph g;
  const int a = g.input(Tensor::full({2, 2}, 1e308));
  REQUIRE_THROWS_AS(g.add(a, a), Error);
  try {
    Graph g2;
    const int b = g2.input(Tensor::full({2, 2}, 1e308));
    g2.add(b, b);
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::non_finite_value);
  }
}

TEST_CASE("backward of sum(p^2)/2 is p") {
  ParamSet ps;
  ps.add("p", Tensor::from({1, 3}, {1, -2, 3}));
  Graph g(&ps);
  const int p = g.param("p");
  const int sq = g.matmul(p, g.reshape(p, {3, 1}));
  const int loss = g.scale(sq, 0.5);
  ParamSet grads = g.backward(loss);
  REQUIRE(grads.get("p")[0] == doctest::Approx(1.0));
  REQUIRE(grads.get("p")[1] == doctest::Approx(-2.0));
  REQUIRE(grads.get("p")[2] == doctest::Approx(3.0));
}

TEST_CASE("parameters off the loss path get zero gradients") {
  ParamSet ps = random_params({{"p", {2, 2}}, {"unused", {3, 3}}}, 8);
  Graph g(&ps);
  const int loss = g.mean(g.gelu(g.param("p")));
  ParamSet grads = g.backward(loss);
  for (i64 i = 0; i < 9; ++i) REQUIRE(grads.get("unused")[i] == 0.0);
  bool any = false;
  for (i64 i = 0; i < 4; ++i) any = any || grads.get("p")[i] != 0.0;
  REQUIRE(any);
}

TEST_CASE("backward requires a scalar loss") {
  ParamSet ps = random_params({{"p", {2, 2}}}, 9);
  Graph g(&ps);
  const int out = g.gelu(g.param("p"));
  REQUIRE_THROWS_AS(g.backward(out), Error);
  try {
    Graph g2(&ps);
    g2.backward(g2.gelu(g2.param("p")));
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::not_scalar_loss);
  }
}

TEST_CASE("forward evaluation is deterministic") {
  ParamSet ps = random_params({{"p", {4, 6}}, {"w", {6, 5}}, {"b", {5}}}, 10);
  auto run = [&] {
    Graph g(&ps);
    const int out =
        g.softmax(g.linear(g.gelu(g.param("p")), g.param("w"), g.param("b")));
    Tensor v = g.value(out);
    return std::vector<double>(v.data(), v.data() + v.numel());
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(std::memcmp(a.data(), b.data(), a.size() * 8) == 0);
}

TEST_CASE("gradients match finite differences for every op") {
  // 5 random points per op, tolerance 1e-6 for elementary ops.
  for (u64 seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);

    {
      ParamSet ps = random_params({{"p", {3, 4}}}, seed);
      REQUIRE(check_unary([](Graph& g, int p) { return g.mean(g.gelu(p)); },
                          ps) < 1e-6);
      REQUIRE(check_unary(
                  [](Graph& g, int p) { return g.mean(g.softmax(p)); },
                  ps) < 1e-6);
      REQUIRE(check_unary([](Graph& g, int p) {
                return g.mean(g.scale(p, -1.7));
              },
                          ps) < 1e-6);
      REQUIRE(check_unary([](Graph& g, int p) {
                return g.mean(g.slice_rows(p, 1, 3));
              },
                          ps) < 1e-6);
      REQUIRE(check_unary([](Graph& g, int p) {
                return g.mean(g.gelu(g.reshape(p, {4, 3})));
              },
                          ps) < 1e-6);
      REQUIRE(check_unary([](Graph& g, int p) {
                return g.mean(g.gelu(g.concat_rows({p, p})));
              },
                          ps) < 1e-6);
      REQUIRE(check_unary([](Graph& g, int p) {
                return g.mean(g.gelu(g.add(p, p)));
              },
                          ps) < 1e-6);
    }

    {
      ParamSet ps = random_params({{"p", {4, 3}}, {"w", {3, 5}}, {"b", {5}},
                                   {"gain", {3}}, {"lnb", {3}}, {"cyc", {2, 3}}},
                                  seed * 77);
      auto fn = [&](const ParamSet& params, ParamSet* grads) {
        Graph g(&params);
        int h = g.param("p");
        h = g.layernorm(h, g.param("gain"), g.param("lnb"));
        h = g.add_cyclic(h, g.param("cyc"));
        h = g.linear(h, g.param("w"), g.param("b"));
        h = g.softmax(h);
        const int loss = g.mean(g.gelu(h));
        if (grads) g.backward(loss, *grads);
        return g.value(loss)[0];
      };
      GradCheckResult res = grad_check(fn, ps, 1e-6);
      CAPTURE(res.worst_param);
      REQUIRE(res.max_rel_err < 1e-6);
    }

    {
      // view_weighted_sum + mpjpe loss path
      ParamSet ps =
          random_params({{"y", {6, 6}}, {"logits", {2}}, {"gt", {18, 3}}},
                        seed * 131);
      auto fn = [&](const ParamSet& params, ParamSet* grads) {
        Graph g(&params);
        const int w = g.softmax(g.param("logits"));
        const int fused = g.view_weighted_sum(g.param("y"), w, 2);
        const int pred =
            g.reshape(g.concat_rows({fused, fused, fused}), {18, 3});
        const int loss = g.mpjpe_loss(pred, g.param("gt"));
        if (grads) g.backward(loss, *grads);
        return g.value(loss)[0];
      };
      GradCheckResult res = grad_check(fn, ps, 1e-6);
      CAPTURE(res.worst_param);
      REQUIRE(res.max_rel_err < 1e-6);
    }
  }
}

TEST_CASE("layernorm gradient with the variance floor engaged") {
  // constant rows have zero variance; the floor branch must still be smooth
  ParamSet ps;
  ps.add("p", Tensor::full({2, 4}, 0.001));
  auto fn = [&](const ParamSet& params, ParamSet* grads) {
    Graph g(&params);
    const int gain = g.input(Tensor::full({4}, 1.0));
    const int bias = g.input(Tensor({4}));
    const int loss = g.mean(g.gelu(g.layernorm(g.param("p"), gain, bias)));
    if (grads) g.backward(loss, *grads);
    return g.value(loss)[0];
  };
  REQUIRE(grad_check(fn, ps, 1e-7).max_rel_err < 1e-5);
}

TEST_CASE("dropout") {
  ParamSet ps = random_params({{"p", {20, 30}}}, 3);
  SUBCASE("rate zero is the identity") {
    Graph g(&ps);
    const int out = g.dropout(g.param("p"), 0.0, 123);
    REQUIRE(std::memcmp(g.value(out).data(), ps.get("p").data(), 600 * 8) == 0);
  }
  SUBCASE("rate 0.5 zeroes roughly half and rescales the rest") {
    Graph g(&ps);
    const int out = g.dropout(g.param("p"), 0.5, 123);
    i64 zeros = 0;
    for (i64 i = 0; i < 600; ++i) {
      const double v = g.value(out)[i];
      if (v == 0.0) {
        ++zeros;
      } else {
        REQUIRE(v == doctest::Approx(2.0 * ps.get("p")[i]).epsilon(1e-12));
      }
    }
    REQUIRE(zeros > 200);
    REQUIRE(zeros < 400);
  }
  SUBCASE("gradient flows through the saved mask") {
    auto fn = [&](const ParamSet& params, ParamSet* grads) {
      Graph g(&params);
      const int loss = g.mean(g.dropout(g.param("p"), 0.3, 7));
      if (grads) g.backward(loss, *grads);
      return g.value(loss)[0];
    };
    REQUIRE(grad_check(fn, ps, 1e-6).max_rel_err < 1e-6);
  }
}

TEST_CASE("slice bounds are validated") {
  Graph g;
  const int a = g.input(Tensor({4, 2}));
  REQUIRE_THROWS_AS(g.slice_rows(a, 2, 2), Error);
  REQUIRE_THROWS_AS(g.slice_rows(a, -1, 2), Error);
  REQUIRE_THROWS_AS(g.slice_rows(a, 0, 5), Error);
  REQUIRE(g.value(g.slice_rows(a, 0, 4)).rows() == 4);
}

TEST_CASE("grad_check flags a wrong gradient") {
  // sanity: the harness itself must fail on an off-by-2 gradient
  ParamSet ps;
  ps.add("p", Tensor::from({2}, {0.3, -0.4}));
  auto bad = [&](const ParamSet& params, ParamSet* grads) {
    const Tensor& p = params.get("p");
    if (grads) {
      grads->get("p")[0] = 2.0 * 2.0 * p[0];  // deliberately doubled
      grads->get("p")[1] = 2.0 * p[1];
    }
    return p[0] * p[0] + p[1] * p[1];
  };
  REQUIRE(grad_check(bad, ps, 1e-6).max_rel_err > 0.4);
}
