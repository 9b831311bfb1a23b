#include "mpl/model.hpp"

#include <cmath>

#include "mpl/rng.hpp"

namespace mpl {

void MplConfig::validate() const {
  if (joints < 1 || views < 1 || dim < 1 || layers < 1 || heads < 1 ||
      mlp_ratio < 1) {
    raise(Err::config_error, "joints/views/dim/layers/heads must all be >= 1");
  }
  if (dim % heads != 0) {
    raise(Err::config_error,
          strfmt("hidden dim %lld must be divisible by %lld heads (spatial "
                 "transformer)",
                 (long long)dim, (long long)heads));
  }
  if ((joints * dim) % heads != 0) {
    raise(Err::config_error,
          strfmt("view token width %lld must be divisible by %lld heads "
                 "(fusion transformer)",
                 (long long)(joints * dim), (long long)heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    raise(Err::config_error, strfmt("dropout %g outside [0, 1)", dropout));
  }
}

void FcConfig::validate() const {
  if (joints < 1 || views < 1) {
    raise(Err::config_error, "joints/views must be >= 1");
  }
  for (i64 h : hidden) {
    if (h < 1) raise(Err::config_error, "hidden widths must be >= 1");
  }
}

namespace {

void add_linear(ParamSet& ps, Rng& rng, const std::string& name, i64 in,
                i64 out) {
  Tensor w({in, out});
  const double bound = std::sqrt(6.0 / double(in + out));
  for (i64 i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
  ps.add(name + ".w", std::move(w));
  ps.add(name + ".b", Tensor({out}));
}

void add_layernorm(ParamSet& ps, const std::string& name, i64 width) {
  ps.add(name + ".g", Tensor::full({width}, 1.0));
  ps.add(name + ".b", Tensor({width}));
}

void add_embedding(ParamSet& ps, Rng& rng, const std::string& name, i64 rows,
                   i64 cols) {
  Tensor e({rows, cols});
  for (i64 i = 0; i < e.numel(); ++i) e[i] = rng.normal(0.0, 0.02);
  ps.add(name, std::move(e));
}

void add_encoder_layer(ParamSet& ps, Rng& rng, const std::string& prefix,
                       i64 width, i64 mlp_ratio) {
  add_layernorm(ps, prefix + ".ln1", width);
  add_linear(ps, rng, prefix + ".attn.q", width, width);
  add_linear(ps, rng, prefix + ".attn.k", width, width);
  add_linear(ps, rng, prefix + ".attn.v", width, width);
  add_linear(ps, rng, prefix + ".attn.o", width, width);
  add_layernorm(ps, prefix + ".ln2", width);
  add_linear(ps, rng, prefix + ".mlp.1", width, width * mlp_ratio);
  add_linear(ps, rng, prefix + ".mlp.2", width * mlp_ratio, width);
}

}  // namespace

ParamSet init_mpl_weights(const MplConfig& cfg, u64 seed) {
  cfg.validate();
  Rng rng(seed);
  ParamSet ps;
  add_linear(ps, rng, "input_proj", 2, cfg.dim);
  add_embedding(ps, rng, "ae", cfg.joints, cfg.dim);
  for (i64 l = 0; l < cfg.layers; ++l) {
    add_encoder_layer(ps, rng, strfmt("spt%lld", (long long)l), cfg.dim,
                      cfg.mlp_ratio);
  }
  add_embedding(ps, rng, "e3d", cfg.views, cfg.view_token_width());
  for (i64 l = 0; l < cfg.layers; ++l) {
    add_encoder_layer(ps, rng, strfmt("fpt%lld", (long long)l),
                      cfg.view_token_width(), cfg.mlp_ratio);
  }
  ps.add("view_logits", Tensor({cfg.views}));
  add_linear(ps, rng, "head", cfg.view_token_width(), cfg.joints * 3);
  return ps;
}

ParamSet init_fc_weights(const FcConfig& cfg, u64 seed) {
  cfg.validate();
  Rng rng(seed);
  ParamSet ps;
  i64 width = cfg.input_width();
  for (size_t i = 0; i < cfg.hidden.size(); ++i) {
    add_linear(ps, rng, strfmt("fc%zu", i), width, cfg.hidden[i]);
    width = cfg.hidden[i];
  }
  add_linear(ps, rng, "fc_out", width, cfg.output_width());
  return ps;
}

std::pair<double, double> normalize_2d(const Pixel2D& px,
                                       const CameraCalibration& cam) {
  return {2.0 * px.u / double(cam.width) - 1.0,
          2.0 * px.v / double(cam.height) - 1.0};
}

namespace {

struct BlockParams {
  MhsaWeightIds attn;
  int ln1g, ln1b, ln2g, ln2b, w1, b1, w2, b2;
};

BlockParams block_params(Graph& g, const std::string& prefix) {
  BlockParams p;
  p.ln1g = g.param(prefix + ".ln1.g");
  p.ln1b = g.param(prefix + ".ln1.b");
  p.attn = {g.param(prefix + ".attn.q.w"), g.param(prefix + ".attn.q.b"),
            g.param(prefix + ".attn.k.w"), g.param(prefix + ".attn.k.b"),
            g.param(prefix + ".attn.v.w"), g.param(prefix + ".attn.v.b"),
            g.param(prefix + ".attn.o.w"), g.param(prefix + ".attn.o.b")};
  p.ln2g = g.param(prefix + ".ln2.g");
  p.ln2b = g.param(prefix + ".ln2.b");
  p.w1 = g.param(prefix + ".mlp.1.w");
  p.b1 = g.param(prefix + ".mlp.1.b");
  p.w2 = g.param(prefix + ".mlp.2.w");
  p.b2 = g.param(prefix + ".mlp.2.b");
  return p;
}

// Pre-norm encoder block: h += MHSA(LN(h)); h += MLP(LN(h)).
int encoder_block(Graph& g, int h, const std::string& prefix, i64 seq_len,
                  i64 heads, double dropout, u64& seed, bool train) {
  const BlockParams p = block_params(g, prefix);
  int a = g.layernorm(h, p.ln1g, p.ln1b);
  int att = g.mhsa(a, p.attn, seq_len, heads);
  if (train && dropout > 0.0) att = g.dropout(att, dropout, seed++);
  h = g.add(h, att);
  int m = g.layernorm(h, p.ln2g, p.ln2b);
  m = g.linear(m, p.w1, p.b1);
  m = g.gelu(m);
  m = g.linear(m, p.w2, p.b2);
  if (train && dropout > 0.0) m = g.dropout(m, dropout, seed++);
  return g.add(h, m);
}

// Normalized scene meters -> world millimeters.
int scene_to_world_mm(Graph& g, int pred, const Vec3& center) {
  int c = g.input(Tensor::from({3}, {center.x, center.y, center.z}));
  return g.scale(g.add_bias(pred, c), 1000.0);
}

}  // namespace

int MplModel::build_spt(Graph& g, int x, u64 dropout_seed, bool train) const {
  int h = g.linear(x, g.param("input_proj.w"), g.param("input_proj.b"));
  h = g.add_cyclic(h, g.param("ae"));
  u64 seed = dropout_seed;
  for (i64 l = 0; l < cfg->layers; ++l) {
    h = encoder_block(g, h, strfmt("spt%lld", (long long)l), cfg->joints,
                      cfg->heads, cfg->dropout, seed, train);
  }
  return h;
}

int MplModel::build_fpt(Graph& g, int tokens, i64 batch, u64 dropout_seed,
                        bool train) const {
  const i64 width = cfg->view_token_width();
  if (g.value(tokens).cols() != width ||
      g.value(tokens).rows() != batch * cfg->views) {
    raise(Err::view_count_mismatch,
          strfmt("fusion transformer expected %lld view tokens of width %lld, "
                 "got %s",
                 (long long)(batch * cfg->views), (long long)width,
                 g.value(tokens).shape_str().c_str()));
  }
  int h = g.add_cyclic(tokens, g.param("e3d"));
  u64 seed = dropout_seed ^ 0x517cc1b727220a95ull;
  for (i64 l = 0; l < cfg->layers; ++l) {
    h = encoder_block(g, h, strfmt("fpt%lld", (long long)l), cfg->views,
                      cfg->heads, cfg->dropout, seed, train);
  }
  int w = g.softmax(g.param("view_logits"));
  int fused = g.view_weighted_sum(h, w, cfg->views);
  int out = g.linear(fused, g.param("head.w"), g.param("head.b"));
  out = g.reshape(out, {batch * cfg->joints, 3});
  return scene_to_world_mm(g, out, cfg->scene_center);
}

int MplModel::build(Graph& g, int x, i64 batch, u64 dropout_seed,
                    bool train) const {
  const Tensor& xv = g.value(x);
  if (xv.cols() != 2 || xv.rows() != batch * cfg->views * cfg->joints) {
    raise(Err::shape_mismatch,
          strfmt("mpl input %s does not match batch %lld x %lld views x %lld "
                 "joints",
                 xv.shape_str().c_str(), (long long)batch, (long long)cfg->views,
                 (long long)cfg->joints));
  }
  int h = build_spt(g, x, dropout_seed, train);
  int tokens = g.reshape(h, {batch * cfg->views, cfg->view_token_width()});
  return build_fpt(g, tokens, batch, dropout_seed, train);
}

int FcModel::build(Graph& g, int x, i64 batch) const {
  const Tensor& xv = g.value(x);
  if (xv.cols() != cfg->input_width() || xv.rows() != batch) {
    raise(Err::shape_mismatch,
          strfmt("fc input %s does not match batch %lld x width %lld",
                 xv.shape_str().c_str(), (long long)batch,
                 (long long)cfg->input_width()));
  }
  int h = x;
  for (size_t i = 0; i < cfg->hidden.size(); ++i) {
    h = g.linear(h, g.param(strfmt("fc%zu.w", i)), g.param(strfmt("fc%zu.b", i)));
    h = g.gelu(h);
  }
  int out = g.linear(h, g.param("fc_out.w"), g.param("fc_out.b"));
  out = g.reshape(out, {batch * cfg->joints, 3});
  return scene_to_world_mm(g, out, cfg->scene_center);
}

Tensor normalized_input(const std::vector<const Skeleton2D*>& views_flat,
                        const CameraSet& cameras,
                        const std::vector<i64>& cam_order, i64 batch,
                        i64 joints) {
  const i64 n_views = i64(cam_order.size());
  if (i64(views_flat.size()) != batch * n_views) {
    raise(Err::view_count_mismatch,
          strfmt("expected %lld views, got %zu", (long long)(batch * n_views),
                 views_flat.size()));
  }
  Tensor x({batch * n_views * joints, 2});
  i64 row = 0;
  for (i64 b = 0; b < batch; ++b) {
    for (i64 v = 0; v < n_views; ++v) {
      const Skeleton2D& skel = *views_flat[size_t(b * n_views + v)];
      const CameraCalibration& cam = cameras.at(size_t(cam_order[size_t(v)]));
      if (skel.joint_count() != joints) {
        raise(Err::shape_mismatch,
              strfmt("view has %lld joints, expected %lld",
                     (long long)skel.joint_count(), (long long)joints));
      }
      for (i64 k = 0; k < joints; ++k) {
        const auto [nx, ny] = normalize_2d(skel.joints[size_t(k)], cam);
        x.at(row, 0) = nx;
        x.at(row, 1) = ny;
        ++row;
      }
    }
  }
  return x;
}

Tensor spt_forward(const Skeleton2D& normalized_pose, const ParamSet& weights,
                   const MplConfig& cfg) {
  cfg.validate();
  if (normalized_pose.joint_count() != cfg.joints) {
    raise(Err::shape_mismatch,
          strfmt("pose has %lld joints, config expects %lld",
                 (long long)normalized_pose.joint_count(), (long long)cfg.joints));
  }
  Graph g(&weights);
  Tensor x({cfg.joints, 2});
  for (i64 k = 0; k < cfg.joints; ++k) {
    x.at(k, 0) = normalized_pose.joints[size_t(k)].u;
    x.at(k, 1) = normalized_pose.joints[size_t(k)].v;
  }
  MplModel model{&cfg};
  const int out = model.build_spt(g, g.input(std::move(x)));
  Tensor result = g.value(out);
  return Tensor::from({cfg.joints, cfg.dim},
                      std::vector<double>(result.data(),
                                          result.data() + result.numel()));
}

namespace {

Skeleton3D rows_to_skeleton(const Tensor& t, i64 joints) {
  Skeleton3D out;
  out.joints.resize(size_t(joints));
  for (i64 k = 0; k < joints; ++k) {
    out.joints[size_t(k)] = {t.at(k, 0), t.at(k, 1), t.at(k, 2)};
  }
  return out;
}

}  // namespace

Skeleton3D fpt_forward(const std::vector<Tensor>& view_tokens,
                       const ParamSet& weights, const MplConfig& cfg) {
  cfg.validate();
  if (i64(view_tokens.size()) != cfg.views) {
    raise(Err::view_count_mismatch,
          strfmt("got %zu view token sets, config expects %lld",
                 view_tokens.size(), (long long)cfg.views));
  }
  Tensor stacked({cfg.views, cfg.view_token_width()});
  for (i64 v = 0; v < cfg.views; ++v) {
    const Tensor& t = view_tokens[size_t(v)];
    if (t.numel() != cfg.view_token_width()) {
      raise(Err::shape_mismatch,
            strfmt("view tokens %s do not flatten to width %lld",
                   t.shape_str().c_str(), (long long)cfg.view_token_width()));
    }
    for (i64 j = 0; j < t.numel(); ++j) stacked.at(v, j) = t[j];
  }
  Graph g(&weights);
  MplModel model{&cfg};
  const int out = model.build_fpt(g, g.input(std::move(stacked)), 1);
  return rows_to_skeleton(g.value(out), cfg.joints);
}

Skeleton3D mpl_forward(const std::vector<Skeleton2D>& views,
                       const ParamSet& weights, const MplConfig& cfg,
                       const CameraSet& cameras) {
  cfg.validate();
  if (i64(views.size()) != cfg.views || i64(cameras.size()) != cfg.views) {
    raise(Err::view_count_mismatch,
          strfmt("sample has %zu views / %zu cameras, config expects %lld",
                 views.size(), cameras.size(), (long long)cfg.views));
  }
  std::vector<const Skeleton2D*> flat;
  std::vector<i64> order;
  for (i64 v = 0; v < cfg.views; ++v) {
    flat.push_back(&views[size_t(v)]);
    order.push_back(v);
  }
  Graph g(&weights);
  MplModel model{&cfg};
  const int x = g.input(normalized_input(flat, cameras, order, 1, cfg.joints));
  const int out = model.build(g, x, 1);
  return rows_to_skeleton(g.value(out), cfg.joints);
}

Skeleton3D fc_forward(const std::vector<Skeleton2D>& views,
                      const ParamSet& weights, const FcConfig& cfg,
                      const CameraSet& cameras) {
  cfg.validate();
  if (i64(views.size()) != cfg.views || i64(cameras.size()) != cfg.views) {
    raise(Err::view_count_mismatch,
          strfmt("sample has %zu views / %zu cameras, config expects %lld",
                 views.size(), cameras.size(), (long long)cfg.views));
  }
  std::vector<const Skeleton2D*> flat;
  std::vector<i64> order;
  for (i64 v = 0; v < cfg.views; ++v) {
    flat.push_back(&views[size_t(v)]);
    order.push_back(v);
  }
  Graph g(&weights);
  FcModel model{&cfg};
  Tensor x = normalized_input(flat, cameras, order, 1, cfg.joints);
  const int xin = g.input(Tensor::from({1, cfg.input_width()},
                                       std::vector<double>(x.data(),
                                                           x.data() + x.numel())));
  const int out = model.build(g, xin, 1);
  return rows_to_skeleton(g.value(out), cfg.joints);
}

double mpjpe(const Skeleton3D& pred, const Skeleton3D& gt,
             const std::vector<uint8_t>& mask) {
  if (pred.joint_count() != gt.joint_count()) {
    raise(Err::shape_mismatch,
          strfmt("skeletons have %lld vs %lld joints",
                 (long long)pred.joint_count(), (long long)gt.joint_count()));
  }
  if (!mask.empty() && i64(mask.size()) != pred.joint_count()) {
    raise(Err::shape_mismatch,
          strfmt("mask has %zu entries for %lld joints", mask.size(),
                 (long long)pred.joint_count()));
  }
  double sum = 0.0;
  i64 count = 0;
  for (i64 k = 0; k < pred.joint_count(); ++k) {
    if (!mask.empty() && !mask[size_t(k)]) continue;
    sum += (pred.joints[size_t(k)] - gt.joints[size_t(k)]).norm();
    count += 1;
  }
  if (count == 0) raise(Err::empty_mask, "mpjpe mask selects no joints");
  return sum / double(count);
}

}  // namespace mpl
