#include <doctest.h>

#include "mpl/tensor.hpp"

using namespace mpl;

TEST_CASE("tensor shapes and storage") {
  Tensor t({3, 4});
  REQUIRE(t.numel() == 12);
  REQUIRE(t.rows() == 3);
  REQUIRE(t.cols() == 4);
  for (i64 i = 0; i < 12; ++i) REQUIRE(t[i] == 0.0);
  t.at(2, 3) = 5.0;
  REQUIRE(t[11] == 5.0);
  REQUIRE(t.shape_str() == "[3x4]");

  Tensor v({5});
  REQUIRE(v.rows() == 1);
  REQUIRE(v.cols() == 5);
}

TEST_CASE("tensor from data validates the length") {
  REQUIRE_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), Error);
  Tensor t = Tensor::from({2, 2}, {1, 2, 3, 4});
  REQUIRE(t.at(1, 0) == 3.0);
}

TEST_CASE("all_finite flags nan and inf") {
  Tensor t = Tensor::from({3}, {1.0, 2.0, 3.0});
  REQUIRE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  REQUIRE_FALSE(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_FALSE(t.all_finite());
}

TEST_CASE("param set keeps insertion order and rejects duplicates") {
  ParamSet ps;
  ps.add("b", Tensor({2}));
  ps.add("a", Tensor({3}));
  REQUIRE(ps.size() == 2);
  REQUIRE(ps.item(0).first == "b");
  REQUIRE(ps.item(1).first == "a");
  REQUIRE(ps.total_elements() == 5);
  REQUIRE_THROWS_AS(ps.add("a", Tensor({1})), Error);
  REQUIRE_THROWS_AS(ps.get("missing"), Error);

  ParamSet z = ps.zeros_like();
  REQUIRE(z.size() == 2);
  REQUIRE(z.get("a").numel() == 3);
}
