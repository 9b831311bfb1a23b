#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mpl/tensor.hpp"

namespace mpl {

// Reverse-mode autodiff on a define-by-run tape. Forward values are computed
// eagerly as nodes are appended; backward() walks the tape in reverse and
// accumulates gradients for every named parameter. Values are validated to be
// finite after each forward op.
//
// A Graph instance is single-threaded. Parameters are read-only during any
// pass; concurrent evaluation uses independent Graph instances over a shared
// ParamSet snapshot.

enum class Op {
  leaf,
  matmul,
  add,
  scale,
  add_bias,
  add_cyclic,
  concat_rows,
  slice_rows,
  reshape,
  softmax,
  layernorm,
  gelu,
  linear,
  mean,
  mhsa,
  dropout,
  view_weighted_sum,
  mpjpe_loss,
};

struct MhsaWeightIds {
  int wq, bq, wk, bk, wv, bv, wo, bo;
};

struct MhsaSaved {
  Tensor q, k, v;      // (S*T) x Dm projections
  Tensor probs;        // (S*H*T) x T attention rows
  Tensor attn_out;     // (S*T) x Dm concatenated heads, pre output projection
};

struct Node {
  Op op = Op::leaf;
  std::vector<int> in;
  Tensor value;                     // owned output (unused for external leaves)
  const Tensor* external = nullptr; // leaf borrowing caller-owned storage
  Tensor grad;
  Tensor* grad_external = nullptr;  // param leaves accumulate here
  bool needs_grad = false;
  double scalar0 = 0.0;             // scale factor / dropout rate
  i64 i0 = 0, i1 = 0;               // op-specific: slice range, seq len, heads, views
  std::string pname;                // parameter name for param leaves
  Tensor aux;                       // layernorm row stats, dropout mask
  std::unique_ptr<MhsaSaved> saved;

  const Tensor& val() const { return external ? *external : value; }
};

class Graph {
public:
  explicit Graph(const ParamSet* params = nullptr) : params_(params) {}

  // Leaves.
  int param(const std::string& name);
  int input(Tensor v);
  int input_view(const Tensor* v);  // caller keeps *v alive and unchanged

  // Forward ops (shapes validated, outputs checked finite).
  int matmul(int a, int b);
  int add(int a, int b);
  int scale(int a, double alpha);
  int add_bias(int a, int bias);        // bias: {n} or 1 x n row
  int add_cyclic(int a, int table);     // table p x n; row i of a gets table[i % p]
  int concat_rows(const std::vector<int>& parts);
  int slice_rows(int a, i64 r0, i64 r1);
  int reshape(int a, std::vector<i64> shape);
  int softmax(int a);                   // last axis
  int layernorm(int a, int gain, int bias);
  int gelu(int a);
  int linear(int x, int w, int b);      // x (m x in) * w (in x out) + b {out}
  int mean(int a);                      // scalar mean of all entries
  int mhsa(int x, const MhsaWeightIds& w, i64 seq_len, i64 heads);
  int dropout(int a, double rate, u64 seed);
  int view_weighted_sum(int y, int w, i64 views);
  int mpjpe_loss(int pred, int gt);     // rows of 3; mean Euclidean distance

  const Tensor& value(int id) const { return nodes_[size_t(id)].val(); }
  i64 size() const { return i64(nodes_.size()); }

  // Gradients of loss w.r.t. every parameter in `grads` (zeroed first, so
  // parameters not on the path to the loss report zero gradients).
  void backward(int loss, ParamSet& grads);
  ParamSet backward(int loss);

private:
  int push(Node n);
  Node& at(int id) { return nodes_[size_t(id)]; }
  const Tensor& v(int id) const { return nodes_[size_t(id)].val(); }
  Tensor& g(int id);
  void check_finite(int id, const char* opname);

  const ParamSet* params_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> param_nodes_;
};

namespace detail {
// Shared numeric routines (also used by the mhsa implementation and tests).
void softmax_rows(const double* x, i64 rows, i64 cols, double* out);
void softmax_backward_rows(const double* y, const double* dy, i64 rows,
                           i64 cols, double* dx_accum);
double gelu_scalar(double x);
double gelu_grad_scalar(double x);
constexpr double kLayerNormVarFloor = 1e-5;
}  // namespace detail

}  // namespace mpl
