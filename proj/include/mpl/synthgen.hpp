#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mpl/geometry.hpp"
#include "mpl/rng.hpp"
#include "mpl/skeleton.hpp"

namespace mpl {

// Parameterized 2D corruption standing in for a real estimator: Gaussian
// jitter, occasional outliers, left/right swaps, and border clamping plus
// extra noise for joints that project outside the image.
struct NoiseModel {
  double sigma_px = 5.0;
  double outlier_prob = 0.05;
  double outlier_sigma_px = 30.0;
  double swap_prob = 0.01;
  double oof_border_sigma_px = 20.0;

  void validate() const;
  static NoiseModel none() { return {0, 0, 0, 0, 0}; }
};

struct GeneratorConfig {
  CameraSet cameras;
  double room_width_m = 2.0;
  double room_depth_m = 3.5;
  double scene_center_x_m = 0.0;
  double scene_center_y_m = 0.0;
  i64 num_samples = 1;
  u64 seed = 1;
  NoiseModel noise;
  double yaw_range = 6.283185307179586;  // radians, default full circle
  double jitter_sigma_mm = 30.0;         // builtin pose perturbation
  std::vector<Skeleton3D> external_poses;  // empty -> builtin library

  void validate() const;
};

// One training/eval record: noisy 2D views plus the ground-truth 3D pose.
struct PosePairSample {
  i64 id = 0;
  Skeleton3D gt_mm;
  std::vector<Skeleton2D> views;  // camera order matches GeneratorConfig
};

// Canonical 17-joint poses (stand, two walk phases, sit, crouch, two
// reaches, lying) built from the anthropometric bone-length table in
// synthgen.cpp. Canonical frame: z up, facing +x, hip midpoint at origin,
// millimeters.
const std::vector<Skeleton3D>& builtin_pose_library();

// Draws a pose in the canonical frame. Builtin poses get per-joint Gaussian
// jitter (bilateral joints perturbed independently); external poses are used
// as-is. EmptyPoseSource when an external source has no rows.
Skeleton3D sample_base_pose(Rng& rng, const GeneratorConfig& cfg);

// Uniform horizontal placement in the room box around the scene center plus
// uniform yaw about the vertical axis; the lowest joint lands on the floor
// (z = 0). Draw order: offset x, offset y, yaw.
Skeleton3D place_in_room(const Skeleton3D& pose, const GeneratorConfig& cfg,
                         Rng& rng);

// Estimator-noise emulation; `ideal` must hold exact projections. Per joint:
// bilateral swap (one draw per pair), then border clamp + oof noise for
// out-of-frame joints or Gaussian + outlier noise for in-frame joints. The
// visibility flag records the pre-noise in_frame result.
Skeleton2D corrupt_2d(const Skeleton2D& ideal, const CameraCalibration& cam,
                      const NoiseModel& noise, Rng& rng);

// Deterministic per-index sample: the RNG stream is derived from
// (seed, index), so any partitioning of indices reproduces identical bytes.
// ResampleExhausted after 100 attempts with the pose behind a camera.
PosePairSample generate_sample(const GeneratorConfig& cfg, i64 index);

struct DatasetSummary {
  i64 num_samples = 0;
  i64 joints = 0;
  i64 views = 0;
  // Fraction of samples where the joint is inside every view's frame.
  std::vector<double> joint_visibility;
  double mean_visibility = 0.0;
};

// Streams samples 0..num_samples-1 as JSONL to `path` and returns exact
// visibility statistics. Generation parallelizes over --threads workers;
// assembly is ordered, so output bytes are independent of the worker count.
DatasetSummary generate_dataset(const GeneratorConfig& cfg,
                                const std::string& path);

}  // namespace mpl
