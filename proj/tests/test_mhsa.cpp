#include <doctest.h>

#include <cmath>
#include <vector>

#include "mpl/gradcheck.hpp"
#include "mpl/graph.hpp"
#include "mpl/rng.hpp"

using namespace mpl;

namespace {

// Brute-force attention oracle with explicit loops, written independently of
// the graph implementation.
Tensor attention_oracle(const Tensor& x, const ParamSet& w, i64 seq_len,
                        i64 heads) {
  const i64 rows = x.rows(), dm = x.cols();
  const i64 seqs = rows / seq_len;
  const i64 dk = dm / heads;
  auto proj = [&](const char* wn, const char* bn) {
    const Tensor& W = w.get(wn);
    const Tensor& B = w.get(bn);
    Tensor out({rows, dm});
    for (i64 r = 0; r < rows; ++r) {
      for (i64 j = 0; j < dm; ++j) {
        double s = B[j];
        for (i64 k = 0; k < dm; ++k) s += x.at(r, k) * W.at(k, j);
        out.at(r, j) = s;
      }
    }
    return out;
  };
  const Tensor q = proj("wq", "bq");
  const Tensor k = proj("wk", "bk");
  const Tensor v = proj("wv", "bv");

  Tensor ao({rows, dm});
  for (i64 s = 0; s < seqs; ++s) {
    for (i64 h = 0; h < heads; ++h) {
      for (i64 t1 = 0; t1 < seq_len; ++t1) {
        std::vector<double> scores(size_t(seq_len));
        for (i64 t2 = 0; t2 < seq_len; ++t2) {
          double dot = 0.0;
          for (i64 d = 0; d < dk; ++d) {
            dot += q.at(s * seq_len + t1, h * dk + d) *
                   k.at(s * seq_len + t2, h * dk + d);
          }
          scores[size_t(t2)] = dot / std::sqrt(double(dk));
        }
        double mx = scores[0];
        for (double sc : scores) mx = std::max(mx, sc);
        double Z = 0.0;
        for (double& sc : scores) {
          sc = std::exp(sc - mx);
          Z += sc;
        }
        for (double& sc : scores) sc /= Z;
        for (i64 d = 0; d < dk; ++d) {
          double acc = 0.0;
          for (i64 t2 = 0; t2 < seq_len; ++t2) {
            acc += scores[size_t(t2)] * v.at(s * seq_len + t2, h * dk + d);
          }
          ao.at(s * seq_len + t1, h * dk + d) = acc;
        }
      }
    }
  }

  const Tensor& Wo = w.get("wo");
  const Tensor& Bo = w.get("bo");
  Tensor out({rows, dm});
  for (i64 r = 0; r < rows; ++r) {
    for (i64 j = 0; j < dm; ++j) {
      double s = Bo[j];
      for (i64 kk = 0; kk < dm; ++kk) s += ao.at(r, kk) * Wo.at(kk, j);
      out.at(r, j) = s;
    }
  }
  return out;
}

ParamSet attn_params(i64 dm, u64 seed) {
  Rng rng(seed);
  ParamSet w;
  for (const char* name : {"wq", "wk", "wv", "wo"}) {
    Tensor t({dm, dm});
    for (i64 i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-0.5, 0.5);
    w.add(name, std::move(t));
  }
  for (const char* name : {"bq", "bk", "bv", "bo"}) {
    Tensor t({dm});
    for (i64 i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-0.2, 0.2);
    w.add(name, std::move(t));
  }
  return w;
}

MhsaWeightIds attn_ids(Graph& g) {
  return {g.param("wq"), g.param("bq"), g.param("wk"), g.param("bk"),
          g.param("wv"), g.param("bv"), g.param("wo"), g.param("bo")};
}

}  // namespace

TEST_CASE("mhsa matches the loop oracle on random 3x8 input with 2 heads") {
  ParamSet w = attn_params(8, 21);
  Rng rng(22);
  Tensor x({3, 8});
  for (i64 i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-1, 1);
  const Tensor want = attention_oracle(x, w, 3, 2);

  Graph g(&w);
  const int out = g.mhsa(g.input(x), attn_ids(g), 3, 2);
  for (i64 i = 0; i < want.numel(); ++i) {
    REQUIRE(g.value(out)[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("mhsa on batched sequences matches per-sequence evaluation") {
  ParamSet w = attn_params(8, 31);
  Rng rng(33);
  Tensor x({10, 8});  // 2 sequences of 5 tokens
  for (i64 i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-1, 1);
  const Tensor want = attention_oracle(x, w, 5, 4);
  Graph g(&w);
  const int out = g.mhsa(g.input(x), attn_ids(g), 5, 4);
  for (i64 i = 0; i < want.numel(); ++i) {
    REQUIRE(g.value(out)[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("single-token attention reduces to out(value(token))") {
  ParamSet w = attn_params(6, 44);
  Rng rng(45);
  Tensor x({1, 6});
  for (i64 i = 0; i < 6; ++i) x[i] = rng.uniform(-1, 1);
  Graph g(&w);
  const int out = g.mhsa(g.input(x), attn_ids(g), 1, 3);

  // with one token the attention weight is exactly 1, so the result is
  // (x Wv + bv) Wo + bo regardless of Wq/Wk
  Graph g2(&w);
  const int vproj = g2.linear(g2.input(x), g2.param("wv"), g2.param("bv"));
  const int want = g2.linear(vproj, g2.param("wo"), g2.param("bo"));
  for (i64 i = 0; i < 6; ++i) {
    REQUIRE(g.value(out)[i] ==
            doctest::Approx(g2.value(want)[i]).epsilon(1e-14));
  }
}

TEST_CASE("identical tokens attend uniformly") {
  ParamSet w = attn_params(8, 55);
  Tensor x({4, 8});
  for (i64 r = 0; r < 4; ++r) {
    for (i64 j = 0; j < 8; ++j) x.at(r, j) = 0.3 * double(j) - 1.0;
  }
  Graph g(&w);
  const int out = g.mhsa(g.input(x), attn_ids(g), 4, 2);
  // all rows identical and equal to the single-token result
  Graph g1(&w);
  Tensor one({1, 8});
  for (i64 j = 0; j < 8; ++j) one[j] = x.at(0, j);
  const int single = g1.mhsa(g1.input(one), attn_ids(g1), 1, 2);
  for (i64 r = 0; r < 4; ++r) {
    for (i64 j = 0; j < 8; ++j) {
      REQUIRE(g.value(out).at(r, j) ==
              doctest::Approx(g1.value(single)[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("mhsa rejects a head count that does not divide the width") {
  ParamSet w = attn_params(8, 66);
  Graph g(&w);
  const int x = g.input(Tensor({4, 8}));
  REQUIRE_THROWS_AS(g.mhsa(x, attn_ids(g), 4, 3), Error);
}

TEST_CASE("mhsa gradients match finite differences") {
  ParamSet ps = attn_params(8, 77);
  Rng rng(78);
  Tensor x({6, 8});
  for (i64 i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-1, 1);
  ps.add("x", std::move(x));

  auto fn = [&](const ParamSet& params, ParamSet* grads) {
    Graph g(&params);
    const int out = g.mhsa(g.param("x"), attn_ids(g), 3, 2);
    const int loss = g.mean(g.gelu(out));
    if (grads) g.backward(loss, *grads);
    return g.value(loss)[0];
  };
  GradCheckResult res = grad_check(fn, ps, 1e-6);
  CAPTURE(res.worst_param);
  REQUIRE(res.max_rel_err < 1e-6);
}
