#include "mpl/graph.hpp"

#include <cmath>
#include <cstring>

#include "mpl/kernels.hpp"
#include "mpl/rng.hpp"

namespace mpl {

namespace detail {

void softmax_rows(const double* x, i64 rows, i64 cols, double* out) {
  for (i64 r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = out + r * cols;
    double mx = xr[0];
    for (i64 j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (i64 j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (i64 j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

void softmax_backward_rows(const double* y, const double* dy, i64 rows,
                           i64 cols, double* dx_accum) {
  for (i64 r = 0; r < rows; ++r) {
    const double* yr = y + r * cols;
    const double* dyr = dy + r * cols;
    double* dxr = dx_accum + r * cols;
    double dot = 0.0;
    for (i64 j = 0; j < cols; ++j) dot += dyr[j] * yr[j];
    for (i64 j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;

double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad_scalar(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779399461;
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
         x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

}  // namespace detail

int Graph::push(Node n) {
  for (int i : n.in) n.needs_grad = n.needs_grad || nodes_[size_t(i)].needs_grad;
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

void Graph::check_finite(int id, const char* opname) {
  if (!nodes_[size_t(id)].val().all_finite()) {
    raise(Err::non_finite_value,
          strfmt("%s produced a non-finite value", opname));
  }
}

Tensor& Graph::g(int id) {
  Node& n = nodes_[size_t(id)];
  if (n.grad_external) return *n.grad_external;
  if (n.grad.empty()) n.grad = Tensor(n.val().shape());
  return n.grad;
}

int Graph::param(const std::string& name) {
  auto it = param_nodes_.find(name);
  if (it != param_nodes_.end()) return it->second;
  if (!params_) raise(Err::config_error, "graph has no parameter set");
  Node n;
  n.op = Op::leaf;
  n.external = &params_->get(name);
  n.pname = name;
  n.needs_grad = true;
  int id = push(std::move(n));
  param_nodes_[name] = id;
  return id;
}

int Graph::input(Tensor v) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(v);
  return push(std::move(n));
}

int Graph::input_view(const Tensor* v) {
  Node n;
  n.op = Op::leaf;
  n.external = v;
  return push(std::move(n));
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* opname) {
  if (!a.same_shape(b)) {
    raise(Err::shape_mismatch,
          strfmt("%s: shapes %s and %s differ", opname, a.shape_str().c_str(),
                 b.shape_str().c_str()));
  }
}

}  // namespace

int Graph::matmul(int a, int b) {
  const Tensor& A = v(a);
  const Tensor& B = v(b);
  if (A.cols() != B.rows()) {
    raise(Err::shape_mismatch,
          strfmt("matmul: inner dimensions of %s and %s differ",
                 A.shape_str().c_str(), B.shape_str().c_str()));
  }
  Node n;
  n.op = Op::matmul;
  n.in = {a, b};
  n.value = Tensor({A.rows(), B.cols()});
  kernels::gemm(false, false, A.rows(), B.cols(), A.cols(), A.data(), A.cols(),
                B.data(), B.cols(), n.value.data(), B.cols(), false);
  int id = push(std::move(n));
  check_finite(id, "matmul");
  return id;
}

int Graph::add(int a, int b) {
  const Tensor& A = v(a);
  const Tensor& B = v(b);
  require_same_shape(A, B, "add");
  Node n;
  n.op = Op::add;
  n.in = {a, b};
  n.value = Tensor(A.shape());
  kernels::add(A.data(), B.data(), n.value.data(), A.numel());
  int id = push(std::move(n));
  check_finite(id, "add");
  return id;
}

int Graph::scale(int a, double alpha) {
  const Tensor& A = v(a);
  Node n;
  n.op = Op::scale;
  n.in = {a};
  n.scalar0 = alpha;
  n.value = Tensor(A.shape());
  kernels::scale(A.data(), alpha, n.value.data(), A.numel());
  int id = push(std::move(n));
  check_finite(id, "scale");
  return id;
}

int Graph::add_bias(int a, int bias) {
  const Tensor& A = v(a);
  const Tensor& B = v(bias);
  if (B.numel() != A.cols()) {
    raise(Err::shape_mismatch,
          strfmt("add_bias: bias %s does not match row width of %s",
                 B.shape_str().c_str(), A.shape_str().c_str()));
  }
  Node n;
  n.op = Op::add_bias;
  n.in = {a, bias};
  n.value = Tensor(A.shape());
  const i64 rows = A.rows(), cols = A.cols();
  for (i64 r = 0; r < rows; ++r) {
    kernels::add(A.data() + r * cols, B.data(), n.value.data() + r * cols, cols);
  }
  int id = push(std::move(n));
  check_finite(id, "add_bias");
  return id;
}

int Graph::add_cyclic(int a, int table) {
  const Tensor& A = v(a);
  const Tensor& T = v(table);
  const i64 p = T.rows();
  if (T.cols() != A.cols() || p == 0 || A.rows() % p != 0) {
    raise(Err::shape_mismatch,
          strfmt("add_cyclic: table %s does not tile rows of %s",
                 T.shape_str().c_str(), A.shape_str().c_str()));
  }
  Node n;
  n.op = Op::add_cyclic;
  n.in = {a, table};
  n.value = Tensor(A.shape());
  const i64 rows = A.rows(), cols = A.cols();
  for (i64 r = 0; r < rows; ++r) {
    kernels::add(A.data() + r * cols, T.data() + (r % p) * cols,
                 n.value.data() + r * cols, cols);
  }
  int id = push(std::move(n));
  check_finite(id, "add_cyclic");
  return id;
}

int Graph::concat_rows(const std::vector<int>& parts) {
  if (parts.empty()) raise(Err::shape_mismatch, "concat_rows: no inputs");
  const i64 cols = v(parts[0]).cols();
  i64 rows = 0;
  for (int p : parts) {
    if (v(p).cols() != cols) {
      raise(Err::shape_mismatch,
            strfmt("concat_rows: row width %lld vs %lld",
                   (long long)v(p).cols(), (long long)cols));
    }
    rows += v(p).rows();
  }
  Node n;
  n.op = Op::concat_rows;
  n.in = parts;
  n.value = Tensor({rows, cols});
  i64 off = 0;
  for (int p : parts) {
    std::memcpy(n.value.data() + off, v(p).data(),
                size_t(v(p).numel()) * sizeof(double));
    off += v(p).numel();
  }
  return push(std::move(n));
}

int Graph::slice_rows(int a, i64 r0, i64 r1) {
  const Tensor& A = v(a);
  if (r0 < 0 || r1 > A.rows() || r0 >= r1) {
    raise(Err::shape_mismatch,
          strfmt("slice_rows: range [%lld, %lld) out of %lld rows",
                 (long long)r0, (long long)r1, (long long)A.rows()));
  }
  Node n;
  n.op = Op::slice_rows;
  n.in = {a};
  n.i0 = r0;
  n.i1 = r1;
  const i64 cols = A.cols();
  n.value = Tensor({r1 - r0, cols});
  std::memcpy(n.value.data(), A.data() + r0 * cols,
              size_t((r1 - r0) * cols) * sizeof(double));
  return push(std::move(n));
}

int Graph::reshape(int a, std::vector<i64> shape) {
  const Tensor& A = v(a);
  i64 numel = 1;
  for (i64 d : shape) numel *= d;
  if (numel != A.numel()) {
    raise(Err::shape_mismatch,
          strfmt("reshape: %s cannot view %lld elements",
                 Tensor(shape).shape_str().c_str(), (long long)A.numel()));
  }
  Node n;
  n.op = Op::reshape;
  n.in = {a};
  n.value = Tensor(std::move(shape));
  std::memcpy(n.value.data(), A.data(), size_t(A.numel()) * sizeof(double));
  return push(std::move(n));
}

int Graph::softmax(int a) {
  const Tensor& A = v(a);
  Node n;
  n.op = Op::softmax;
  n.in = {a};
  n.value = Tensor(A.shape());
  detail::softmax_rows(A.data(), A.rows(), A.cols(), n.value.data());
  int id = push(std::move(n));
  check_finite(id, "softmax");
  return id;
}

int Graph::layernorm(int a, int gain, int bias) {
  const Tensor& A = v(a);
  const Tensor& G = v(gain);
  const Tensor& B = v(bias);
  const i64 cols = A.cols();
  if (G.numel() != cols || B.numel() != cols) {
    raise(Err::shape_mismatch,
          strfmt("layernorm: gain %s / bias %s do not match row width of %s",
                 G.shape_str().c_str(), B.shape_str().c_str(),
                 A.shape_str().c_str()));
  }
  Node n;
  n.op = Op::layernorm;
  n.in = {a, gain, bias};
  n.value = Tensor(A.shape());
  const i64 rows = A.rows();
  n.aux = Tensor({rows, 3});  // mu, rstd, clamped
  for (i64 r = 0; r < rows; ++r) {
    const double* xr = A.data() + r * cols;
    double* yr = n.value.data() + r * cols;
    double mu = 0.0;
    for (i64 j = 0; j < cols; ++j) mu += xr[j];
    mu /= double(cols);
    double var = 0.0;
    for (i64 j = 0; j < cols; ++j) {
      const double d = xr[j] - mu;
      var += d * d;
    }
    var /= double(cols);
    const bool clamped = var < detail::kLayerNormVarFloor;
    const double rstd =
        1.0 / std::sqrt(clamped ? detail::kLayerNormVarFloor : var);
    for (i64 j = 0; j < cols; ++j) {
      yr[j] = (xr[j] - mu) * rstd * G[j] + B[j];
    }
    n.aux.at(r, 0) = mu;
    n.aux.at(r, 1) = rstd;
    n.aux.at(r, 2) = clamped ? 1.0 : 0.0;
  }
  int id = push(std::move(n));
  check_finite(id, "layernorm");
  return id;
}

int Graph::gelu(int a) {
  const Tensor& A = v(a);
  Node n;
  n.op = Op::gelu;
  n.in = {a};
  n.value = Tensor(A.shape());
  for (i64 i = 0; i < A.numel(); ++i) {
    n.value[i] = detail::gelu_scalar(A[i]);
  }
  int id = push(std::move(n));
  check_finite(id, "gelu");
  return id;
}

int Graph::linear(int x, int w, int b) {
  const Tensor& X = v(x);
  const Tensor& W = v(w);
  const Tensor& B = v(b);
  if (X.cols() != W.rows() || B.numel() != W.cols()) {
    raise(Err::shape_mismatch,
          strfmt("linear: x %s, w %s, b %s are inconsistent",
                 X.shape_str().c_str(), W.shape_str().c_str(),
                 B.shape_str().c_str()));
  }
  Node n;
  n.op = Op::linear;
  n.in = {x, w, b};
  const i64 rows = X.rows(), out = W.cols();
  n.value = Tensor({rows, out});
  kernels::gemm(false, false, rows, out, X.cols(), X.data(), X.cols(),
                W.data(), out, n.value.data(), out, false);
  for (i64 r = 0; r < rows; ++r) {
    kernels::add(n.value.data() + r * out, B.data(), n.value.data() + r * out,
                 out);
  }
  int id = push(std::move(n));
  check_finite(id, "linear");
  return id;
}

int Graph::mean(int a) {
  const Tensor& A = v(a);
  if (A.numel() == 0) raise(Err::shape_mismatch, "mean: empty tensor");
  Node n;
  n.op = Op::mean;
  n.in = {a};
  double s = 0.0;
  for (i64 i = 0; i < A.numel(); ++i) s += A[i];
  n.value = Tensor::from({1}, {s / double(A.numel())});
  int id = push(std::move(n));
  check_finite(id, "mean");
  return id;
}

int Graph::mhsa(int x, const MhsaWeightIds& w, i64 seq_len, i64 heads) {
  const Tensor& X = v(x);
  const i64 dm = X.cols();
  if (heads <= 0 || dm % heads != 0) {
    raise(Err::shape_mismatch,
          strfmt("mhsa: token width %lld not divisible by %lld heads",
                 (long long)dm, (long long)heads));
  }
  if (seq_len <= 0 || X.rows() % seq_len != 0) {
    raise(Err::shape_mismatch,
          strfmt("mhsa: %lld rows not divisible by sequence length %lld",
                 (long long)X.rows(), (long long)seq_len));
  }
  for (int pid : {w.wq, w.wk, w.wv, w.wo}) {
    const Tensor& W = v(pid);
    if (W.rows() != dm || W.cols() != dm) {
      raise(Err::shape_mismatch,
            strfmt("mhsa: projection %s must be %lldx%lld",
                   W.shape_str().c_str(), (long long)dm, (long long)dm));
    }
  }
  for (int pid : {w.bq, w.bk, w.bv, w.bo}) {
    if (v(pid).numel() != dm) {
      raise(Err::shape_mismatch,
            strfmt("mhsa: bias %s must have %lld entries",
                   v(pid).shape_str().c_str(), (long long)dm));
    }
  }
  const i64 rows = X.rows();
  const i64 seqs = rows / seq_len;
  const i64 dk = dm / heads;
  const double alpha = 1.0 / std::sqrt(double(dk));

  auto project = [&](int wid, int bid, Tensor& out) {
    out = Tensor({rows, dm});
    kernels::gemm(false, false, rows, dm, dm, X.data(), dm, v(wid).data(), dm,
                  out.data(), dm, false);
    for (i64 r = 0; r < rows; ++r) {
      kernels::add(out.data() + r * dm, v(bid).data(), out.data() + r * dm, dm);
    }
  };

  Node n;
  n.op = Op::mhsa;
  n.in = {x, w.wq, w.bq, w.wk, w.bk, w.wv, w.bv, w.wo, w.bo};
  n.i0 = seq_len;
  n.i1 = heads;
  n.saved = std::make_unique<MhsaSaved>();
  MhsaSaved& s = *n.saved;
  project(w.wq, w.bq, s.q);
  project(w.wk, w.bk, s.k);
  project(w.wv, w.bv, s.v);

  s.probs = Tensor({seqs * heads * seq_len, seq_len});
  s.attn_out = Tensor({rows, dm});
  std::vector<double> scores(static_cast<size_t>(seq_len));
  for (i64 sq = 0; sq < seqs; ++sq) {
    const i64 base = sq * seq_len;
    for (i64 h = 0; h < heads; ++h) {
      const i64 off = h * dk;
      double* prob_base =
          s.probs.data() + ((sq * heads + h) * seq_len) * seq_len;
      for (i64 t1 = 0; t1 < seq_len; ++t1) {
        const double* qr = s.q.data() + (base + t1) * dm + off;
        for (i64 t2 = 0; t2 < seq_len; ++t2) {
          const double* kr = s.k.data() + (base + t2) * dm + off;
          double dot = 0.0;
          for (i64 d = 0; d < dk; ++d) dot += qr[d] * kr[d];
          scores[size_t(t2)] = dot * alpha;
        }
        detail::softmax_rows(scores.data(), 1, seq_len,
                             prob_base + t1 * seq_len);
      }
      for (i64 t1 = 0; t1 < seq_len; ++t1) {
        const double* pr = prob_base + t1 * seq_len;
        double* ao = s.attn_out.data() + (base + t1) * dm + off;
        for (i64 d = 0; d < dk; ++d) ao[d] = 0.0;
        for (i64 t2 = 0; t2 < seq_len; ++t2) {
          const double* vr = s.v.data() + (base + t2) * dm + off;
          const double p = pr[t2];
          for (i64 d = 0; d < dk; ++d) ao[d] += p * vr[d];
        }
      }
    }
  }

  n.value = Tensor({rows, dm});
  kernels::gemm(false, false, rows, dm, dm, s.attn_out.data(), dm,
                v(w.wo).data(), dm, n.value.data(), dm, false);
  for (i64 r = 0; r < rows; ++r) {
    kernels::add(n.value.data() + r * dm, v(w.bo).data(),
                 n.value.data() + r * dm, dm);
  }
  int id = push(std::move(n));
  check_finite(id, "mhsa");
  return id;
}

int Graph::dropout(int a, double rate, u64 seed) {
  const Tensor& A = v(a);
  if (rate < 0.0 || rate >= 1.0) {
    raise(Err::config_error, strfmt("dropout rate %g outside [0, 1)", rate));
  }
  Node n;
  n.op = Op::dropout;
  n.in = {a};
  n.scalar0 = rate;
  n.value = Tensor(A.shape());
  if (rate == 0.0) {
    std::memcpy(n.value.data(), A.data(), size_t(A.numel()) * sizeof(double));
  } else {
    n.aux = Tensor(A.shape());
    Rng rng(seed);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (i64 i = 0; i < A.numel(); ++i) {
      n.aux[i] = rng.uniform() >= rate ? keep_scale : 0.0;
      n.value[i] = A[i] * n.aux[i];
    }
  }
  return push(std::move(n));
}

int Graph::view_weighted_sum(int y, int w, i64 views) {
  const Tensor& Y = v(y);
  const Tensor& W = v(w);
  if (views <= 0 || Y.rows() % views != 0 || W.numel() != views) {
    raise(Err::shape_mismatch,
          strfmt("view_weighted_sum: %s with %lld weights over %lld views",
                 Y.shape_str().c_str(), (long long)W.numel(),
                 (long long)views));
  }
  Node n;
  n.op = Op::view_weighted_sum;
  n.in = {y, w};
  n.i0 = views;
  const i64 batch = Y.rows() / views;
  const i64 cols = Y.cols();
  n.value = Tensor({batch, cols});
  for (i64 b = 0; b < batch; ++b) {
    double* out = n.value.data() + b * cols;
    for (i64 nv = 0; nv < views; ++nv) {
      kernels::axpy(W[nv], Y.data() + (b * views + nv) * cols, out, cols);
    }
  }
  int id = push(std::move(n));
  check_finite(id, "view_weighted_sum");
  return id;
}

int Graph::mpjpe_loss(int pred, int gt) {
  const Tensor& P = v(pred);
  const Tensor& G = v(gt);
  require_same_shape(P, G, "mpjpe_loss");
  if (P.cols() != 3) {
    raise(Err::shape_mismatch,
          strfmt("mpjpe_loss: expected rows of 3 coordinates, got %s",
                 P.shape_str().c_str()));
  }
  Node n;
  n.op = Op::mpjpe_loss;
  n.in = {pred, gt};
  const i64 rows = P.rows();
  n.aux = Tensor({rows});  // per-joint distances
  double sum = 0.0;
  for (i64 r = 0; r < rows; ++r) {
    const double dx = P.at(r, 0) - G.at(r, 0);
    const double dy = P.at(r, 1) - G.at(r, 1);
    const double dz = P.at(r, 2) - G.at(r, 2);
    const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
    n.aux[r] = d;
    sum += d;
  }
  n.value = Tensor::from({1}, {sum / double(rows)});
  int id = push(std::move(n));
  check_finite(id, "mpjpe_loss");
  return id;
}

// ------------------------------------------------------------------ backward

void Graph::backward(int loss, ParamSet& grads) {
  if (v(loss).numel() != 1) {
    raise(Err::not_scalar_loss,
          strfmt("loss node has shape %s", v(loss).shape_str().c_str()));
  }
  for (auto& [name, t] : grads) t.fill(0.0);
  for (Node& n : nodes_) {
    n.grad = Tensor();
    n.grad_external = n.pname.empty() ? nullptr : &grads.get(n.pname);
  }
  if (!at(loss).needs_grad) return;  // loss independent of all parameters

  g(loss).fill(1.0);

  for (int id = loss; id >= 0; --id) {
    Node& n = at(id);
    if (n.op == Op::leaf || !n.needs_grad) continue;
    const bool has_grad = n.grad_external || !n.grad.empty();
    if (!has_grad) continue;
    const Tensor& dy = n.grad_external ? *n.grad_external : n.grad;
    auto wants = [&](int i) { return at(n.in[size_t(i)]).needs_grad; };

    switch (n.op) {
      case Op::matmul: {
        const Tensor& A = v(n.in[0]);
        const Tensor& B = v(n.in[1]);
        if (wants(0)) {
          kernels::gemm(false, true, A.rows(), A.cols(), B.cols(), dy.data(),
                        B.cols(), B.data(), B.cols(), g(n.in[0]).data(),
                        A.cols(), true);
        }
        if (wants(1)) {
          kernels::gemm(true, false, B.rows(), B.cols(), A.rows(), A.data(),
                        A.cols(), dy.data(), B.cols(), g(n.in[1]).data(),
                        B.cols(), true);
        }
        break;
      }
      case Op::add: {
        if (wants(0)) kernels::axpy(1.0, dy.data(), g(n.in[0]).data(), dy.numel());
        if (wants(1)) kernels::axpy(1.0, dy.data(), g(n.in[1]).data(), dy.numel());
        break;
      }
      case Op::scale: {
        if (wants(0)) {
          kernels::axpy(n.scalar0, dy.data(), g(n.in[0]).data(), dy.numel());
        }
        break;
      }
      case Op::add_bias: {
        if (wants(0)) kernels::axpy(1.0, dy.data(), g(n.in[0]).data(), dy.numel());
        if (wants(1)) {
          kernels::colsum(dy.data(), dy.rows(), dy.cols(), dy.cols(),
                          g(n.in[1]).data(), true);
        }
        break;
      }
      case Op::add_cyclic: {
        if (wants(0)) kernels::axpy(1.0, dy.data(), g(n.in[0]).data(), dy.numel());
        if (wants(1)) {
          Tensor& dt = g(n.in[1]);
          const i64 p = v(n.in[1]).rows();
          const i64 cols = dy.cols();
          for (i64 r = 0; r < dy.rows(); ++r) {
            kernels::axpy(1.0, dy.data() + r * cols,
                          dt.data() + (r % p) * cols, cols);
          }
        }
        break;
      }
      case Op::concat_rows: {
        i64 off = 0;
        for (size_t i = 0; i < n.in.size(); ++i) {
          const i64 len = v(n.in[i]).numel();
          if (wants(int(i))) {
            kernels::axpy(1.0, dy.data() + off, g(n.in[i]).data(), len);
          }
          off += len;
        }
        break;
      }
      case Op::slice_rows: {
        if (wants(0)) {
          const i64 cols = dy.cols();
          kernels::axpy(1.0, dy.data(), g(n.in[0]).data() + n.i0 * cols,
                        dy.numel());
        }
        break;
      }
      case Op::reshape: {
        if (wants(0)) kernels::axpy(1.0, dy.data(), g(n.in[0]).data(), dy.numel());
        break;
      }
      case Op::softmax: {
        if (wants(0)) {
          detail::softmax_backward_rows(n.value.data(), dy.data(), dy.rows(),
                                        dy.cols(), g(n.in[0]).data());
        }
        break;
      }
      case Op::layernorm: {
        const Tensor& X = v(n.in[0]);
        const Tensor& G = v(n.in[1]);
        const i64 rows = X.rows(), cols = X.cols();
        Tensor* dx = wants(0) ? &g(n.in[0]) : nullptr;
        Tensor* dgain = wants(1) ? &g(n.in[1]) : nullptr;
        Tensor* dbias = wants(2) ? &g(n.in[2]) : nullptr;
        for (i64 r = 0; r < rows; ++r) {
          const double mu = n.aux.at(r, 0);
          const double rstd = n.aux.at(r, 1);
          const bool clamped = n.aux.at(r, 2) != 0.0;
          const double* xr = X.data() + r * cols;
          const double* dyr = dy.data() + r * cols;
          double sum_gdy = 0.0, sum_gdy_xhat = 0.0;
          for (i64 j = 0; j < cols; ++j) {
            const double xhat = (xr[j] - mu) * rstd;
            const double gdy = G[j] * dyr[j];
            sum_gdy += gdy;
            sum_gdy_xhat += gdy * xhat;
            if (dgain) (*dgain)[j] += dyr[j] * xhat;
            if (dbias) (*dbias)[j] += dyr[j];
          }
          if (dx) {
            const double m1 = sum_gdy / double(cols);
            const double m2 = clamped ? 0.0 : sum_gdy_xhat / double(cols);
            double* dxr = dx->data() + r * cols;
            for (i64 j = 0; j < cols; ++j) {
              const double xhat = (xr[j] - mu) * rstd;
              dxr[j] += rstd * (G[j] * dyr[j] - m1 - xhat * m2);
            }
          }
        }
        break;
      }
      case Op::gelu: {
        if (wants(0)) {
          const Tensor& X = v(n.in[0]);
          Tensor& dx = g(n.in[0]);
          for (i64 i = 0; i < X.numel(); ++i) {
            dx[i] += dy[i] * detail::gelu_grad_scalar(X[i]);
          }
        }
        break;
      }
      case Op::linear: {
        const Tensor& X = v(n.in[0]);
        const Tensor& W = v(n.in[1]);
        if (wants(0)) {
          kernels::gemm(false, true, X.rows(), X.cols(), W.cols(), dy.data(),
                        W.cols(), W.data(), W.cols(), g(n.in[0]).data(),
                        X.cols(), true);
        }
        if (wants(1)) {
          kernels::gemm(true, false, W.rows(), W.cols(), X.rows(), X.data(),
                        X.cols(), dy.data(), W.cols(), g(n.in[1]).data(),
                        W.cols(), true);
        }
        if (wants(2)) {
          kernels::colsum(dy.data(), dy.rows(), dy.cols(), dy.cols(),
                          g(n.in[2]).data(), true);
        }
        break;
      }
      case Op::mean: {
        if (wants(0)) {
          Tensor& dx = g(n.in[0]);
          const double c = dy[0] / double(dx.numel());
          for (i64 i = 0; i < dx.numel(); ++i) dx[i] += c;
        }
        break;
      }
      case Op::mhsa: {
        const Tensor& X = v(n.in[0]);
        const MhsaSaved& s = *n.saved;
        const i64 rows = X.rows(), dm = X.cols();
        const i64 seq_len = n.i0, heads = n.i1;
        const i64 seqs = rows / seq_len;
        const i64 dk = dm / heads;
        const double alpha = 1.0 / std::sqrt(double(dk));
        const Tensor& Wq = v(n.in[1]);
        const Tensor& Wk = v(n.in[3]);
        const Tensor& Wv = v(n.in[5]);
        const Tensor& Wo = v(n.in[7]);

        // Output projection.
        Tensor d_ao({rows, dm});
        kernels::gemm(false, true, rows, dm, dm, dy.data(), dm, Wo.data(), dm,
                      d_ao.data(), dm, false);
        if (wants(7)) {
          kernels::gemm(true, false, dm, dm, rows, s.attn_out.data(), dm,
                        dy.data(), dm, g(n.in[7]).data(), dm, true);
        }
        if (wants(8)) {
          kernels::colsum(dy.data(), rows, dm, dm, g(n.in[8]).data(), true);
        }

        // Attention core.
        Tensor dq({rows, dm}), dkk({rows, dm}), dvv({rows, dm});
        std::vector<double> dprob(static_cast<size_t>(seq_len)), dscore(static_cast<size_t>(seq_len));
        for (i64 sq = 0; sq < seqs; ++sq) {
          const i64 base = sq * seq_len;
          for (i64 h = 0; h < heads; ++h) {
            const i64 off = h * dk;
            const double* prob_base =
                s.probs.data() + ((sq * heads + h) * seq_len) * seq_len;
            for (i64 t1 = 0; t1 < seq_len; ++t1) {
              const double* pr = prob_base + t1 * seq_len;
              const double* dao = d_ao.data() + (base + t1) * dm + off;
              for (i64 t2 = 0; t2 < seq_len; ++t2) {
                const double* vr = s.v.data() + (base + t2) * dm + off;
                double dot = 0.0;
                for (i64 d = 0; d < dk; ++d) dot += dao[d] * vr[d];
                dprob[size_t(t2)] = dot;
                double* dvr = dvv.data() + (base + t2) * dm + off;
                const double p = pr[t2];
                for (i64 d = 0; d < dk; ++d) dvr[d] += p * dao[d];
              }
              // softmax backward on this attention row
              double dot_p = 0.0;
              for (i64 t2 = 0; t2 < seq_len; ++t2) {
                dot_p += dprob[size_t(t2)] * pr[t2];
              }
              for (i64 t2 = 0; t2 < seq_len; ++t2) {
                dscore[size_t(t2)] = pr[t2] * (dprob[size_t(t2)] - dot_p);
              }
              double* dqr = dq.data() + (base + t1) * dm + off;
              const double* qr = s.q.data() + (base + t1) * dm + off;
              for (i64 t2 = 0; t2 < seq_len; ++t2) {
                const double ds = dscore[size_t(t2)] * alpha;
                const double* kr = s.k.data() + (base + t2) * dm + off;
                double* dkr = dkk.data() + (base + t2) * dm + off;
                for (i64 d = 0; d < dk; ++d) {
                  dqr[d] += ds * kr[d];
                  dkr[d] += ds * qr[d];
                }
              }
            }
          }
        }

        // Input projections.
        auto backprop_proj = [&](const Tensor& dproj, const Tensor& W,
                                 int w_in, int b_in) {
          if (wants(0)) {
            kernels::gemm(false, true, rows, dm, dm, dproj.data(), dm,
                          W.data(), dm, g(n.in[0]).data(), dm, true);
          }
          if (at(n.in[size_t(w_in)]).needs_grad) {
            kernels::gemm(true, false, dm, dm, rows, X.data(), dm,
                          dproj.data(), dm, g(n.in[size_t(w_in)]).data(), dm,
                          true);
          }
          if (at(n.in[size_t(b_in)]).needs_grad) {
            kernels::colsum(dproj.data(), rows, dm, dm,
                            g(n.in[size_t(b_in)]).data(), true);
          }
        };
        backprop_proj(dq, Wq, 1, 2);
        backprop_proj(dkk, Wk, 3, 4);
        backprop_proj(dvv, Wv, 5, 6);
        break;
      }
      case Op::dropout: {
        if (wants(0)) {
          Tensor& dx = g(n.in[0]);
          if (n.scalar0 == 0.0) {
            kernels::axpy(1.0, dy.data(), dx.data(), dy.numel());
          } else {
            for (i64 i = 0; i < dy.numel(); ++i) dx[i] += dy[i] * n.aux[i];
          }
        }
        break;
      }
      case Op::view_weighted_sum: {
        const Tensor& Y = v(n.in[0]);
        const Tensor& W = v(n.in[1]);
        const i64 views = n.i0;
        const i64 batch = Y.rows() / views;
        const i64 cols = Y.cols();
        if (wants(0)) {
          Tensor& dYt = g(n.in[0]);
          for (i64 b = 0; b < batch; ++b) {
            for (i64 nv = 0; nv < views; ++nv) {
              kernels::axpy(W[nv], dy.data() + b * cols,
                            dYt.data() + (b * views + nv) * cols, cols);
            }
          }
        }
        if (wants(1)) {
          Tensor& dW = g(n.in[1]);
          for (i64 b = 0; b < batch; ++b) {
            const double* dyr = dy.data() + b * cols;
            for (i64 nv = 0; nv < views; ++nv) {
              const double* yr = Y.data() + (b * views + nv) * cols;
              double dot = 0.0;
              for (i64 j = 0; j < cols; ++j) dot += yr[j] * dyr[j];
              dW[nv] += dot;
            }
          }
        }
        break;
      }
      case Op::mpjpe_loss: {
        const Tensor& P = v(n.in[0]);
        const Tensor& G = v(n.in[1]);
        const i64 rows = P.rows();
        const double base = dy[0] / double(rows);
        Tensor* dp = wants(0) ? &g(n.in[0]) : nullptr;
        Tensor* dg = wants(1) ? &g(n.in[1]) : nullptr;
        for (i64 r = 0; r < rows; ++r) {
          const double d = n.aux[r];
          if (d <= 0.0) continue;
          const double c = base / d;
          for (i64 j = 0; j < 3; ++j) {
            const double diff = (P.at(r, j) - G.at(r, j)) * c;
            if (dp) dp->at(r, j) += diff;
            if (dg) dg->at(r, j) -= diff;
          }
        }
        break;
      }
      case Op::leaf:
        break;
    }
  }
}

ParamSet Graph::backward(int loss) {
  ParamSet grads =
      params_ ? params_->zeros_like() : ParamSet{};
  backward(loss, grads);
  return grads;
}

}  // namespace mpl
