#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mpl/geometry.hpp"
#include "mpl/graph.hpp"
#include "mpl/skeleton_types.hpp"

namespace mpl {

// Architecture hyperparameters for the multi-view pose lifter. The network
// head emits coordinates in a normalized scene frame (meters, relative to
// scene_center); conversion to world millimeters is a fixed affine step
// outside the learned parameters.
struct MplConfig {
  i64 joints = 17;      // K
  i64 views = 2;        // N
  i64 dim = 32;         // D, per-keypoint embedding width
  i64 layers = 2;       // L, encoder layers in each transformer
  i64 heads = 8;        // H
  i64 mlp_ratio = 4;
  double dropout = 0.0;
  Vec3 scene_center{0, 0, 0};  // meters

  i64 view_token_width() const { return joints * dim; }
  void validate() const;
};

struct FcConfig {
  i64 joints = 17;
  i64 views = 2;
  std::vector<i64> hidden{1024, 1024};
  Vec3 scene_center{0, 0, 0};

  i64 input_width() const { return views * joints * 2; }
  i64 output_width() const { return joints * 3; }
  void validate() const;
};

// Deterministic initialization: linear weights uniform in
// +-sqrt(6/(fan_in+fan_out)), embeddings (AE, E3D) normal sigma 0.02, view
// logits zero, layernorm gain 1 / bias 0, biases zero.
ParamSet init_mpl_weights(const MplConfig& cfg, u64 seed);
ParamSet init_fc_weights(const FcConfig& cfg, u64 seed);

// Image-size normalization of estimator pixels: x = 2u/W - 1, y = 2v/H - 1.
// Out-of-frame inputs map outside [-1, 1] without clamping.
std::pair<double, double> normalize_2d(const Pixel2D& px,
                                       const CameraCalibration& cam);

// Graph builders. Inputs are nodes already in the graph; outputs are node ids.
struct MplModel {
  const MplConfig* cfg;

  // x: (B*N*K) x 2 normalized coordinates, rows ordered batch-major, then
  // view, then keypoint. Returns (B*K) x 3 world-millimeter predictions.
  int build(Graph& g, int x, i64 batch, u64 dropout_seed = 0,
            bool train = false) const;

  // Spatial transformer alone: x (S*K) x 2 -> (S*K) x D tokens.
  int build_spt(Graph& g, int x, u64 dropout_seed = 0,
                bool train = false) const;

  // Fusion transformer alone: tokens (B*N) x (K*D) -> (B*K) x 3 world mm.
  int build_fpt(Graph& g, int tokens, i64 batch, u64 dropout_seed = 0,
                bool train = false) const;
};

struct FcModel {
  const FcConfig* cfg;

  // x: B x (N*K*2) normalized coordinates flattened view-major, joint-minor.
  // Returns (B*K) x 3 world-millimeter predictions.
  int build(Graph& g, int x, i64 batch) const;
};

// Single-sample forward passes (the deployment-path API).
Tensor spt_forward(const Skeleton2D& normalized_pose, const ParamSet& weights,
                   const MplConfig& cfg);
Skeleton3D fpt_forward(const std::vector<Tensor>& view_tokens,
                       const ParamSet& weights, const MplConfig& cfg);
Skeleton3D mpl_forward(const std::vector<Skeleton2D>& views,
                       const ParamSet& weights, const MplConfig& cfg,
                       const CameraSet& cameras);
Skeleton3D fc_forward(const std::vector<Skeleton2D>& views,
                      const ParamSet& weights, const FcConfig& cfg,
                      const CameraSet& cameras);

// Mean per-joint position error in millimeters over the selected joints
// (all when mask is empty). EmptyMask when a mask selects nothing.
double mpjpe(const Skeleton3D& pred, const Skeleton3D& gt,
             const std::vector<uint8_t>& mask = {});

// Batched helper shared by trainer/evalbench: normalized input tensor for a
// span of samples, rows (b, view, joint) with joint fastest.
Tensor normalized_input(const std::vector<const Skeleton2D*>& views_flat,
                        const CameraSet& cameras,
                        const std::vector<i64>& cam_order, i64 batch,
                        i64 joints);

}  // namespace mpl
