#include "mpl/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include "mpl/io.hpp"
#include "mpl/kernels.hpp"

namespace mpl {

void NoiseModel::validate() const {
  if (sigma_px < 0 || outlier_sigma_px < 0 || oof_border_sigma_px < 0) {
    raise(Err::config_error, "noise sigmas must be >= 0");
  }
  if (outlier_prob < 0 || outlier_prob > 1 || swap_prob < 0 || swap_prob > 1) {
    raise(Err::config_error, "noise probabilities must be in [0, 1]");
  }
}

void GeneratorConfig::validate() const {
  if (cameras.empty()) raise(Err::config_error, "at least one camera required");
  for (const auto& cam : cameras) cam.validate();
  if (room_width_m < 0 || room_depth_m < 0) {
    raise(Err::config_error, "room dimensions must be >= 0");
  }
  if (num_samples < 1) raise(Err::config_error, "samples must be >= 1");
  if (yaw_range < 0) raise(Err::config_error, "yaw range must be >= 0");
  if (jitter_sigma_mm < 0) raise(Err::config_error, "jitter sigma must be >= 0");
  noise.validate();
}

namespace {

// Anthropometric bone-length table (millimeters). The builtin library
// positions every joint from these lengths and per-pose direction vectors.
constexpr double kFemur = 450.0;
constexpr double kTibia = 430.0;
constexpr double kUpperArm = 280.0;
constexpr double kForearm = 250.0;
constexpr double kSpine = 500.0;       // hip midpoint to shoulder-line center
constexpr double kHipHalf = 95.0;      // hip midpoint to hip joint
constexpr double kShoulderHalf = 180.0;
constexpr double kNeckUp = 120.0;      // shoulder center to nose, along torso
constexpr double kNoseForward = 90.0;
constexpr double kEyeUp = 150.0, kEyeForward = 75.0, kEyeSide = 33.0;
constexpr double kEarUp = 140.0, kEarForward = 10.0, kEarSide = 70.0;

struct PoseSpec {
  Vec3 torso;                  // hip midpoint -> shoulder center
  Vec3 facing;                 // nose direction
  Vec3 femur_l, femur_r;       // hip -> knee
  Vec3 tibia_l, tibia_r;       // knee -> ankle
  Vec3 uarm_l, uarm_r;         // shoulder -> elbow
  Vec3 farm_l, farm_r;         // elbow -> wrist
};

// COCO-17 indices.
enum : size_t {
  kNose = 0, kLEye, kREye, kLEar, kREar, kLShoulder, kRShoulder,
  kLElbow, kRElbow, kLWrist, kRWrist, kLHip, kRHip, kLKnee, kRKnee,
  kLAnkle, kRAnkle
};

Skeleton3D assemble(const PoseSpec& s) {
  const Vec3 t = s.torso.normalized();
  const Vec3 f = s.facing.normalized();
  const Vec3 lat = t.cross(f).normalized();  // "left" in the pose frame

  Skeleton3D p;
  p.joints.resize(17);
  const Vec3 pelvis{0, 0, 0};
  p.joints[kLHip] = pelvis + lat * kHipHalf;
  p.joints[kRHip] = pelvis - lat * kHipHalf;
  p.joints[kLKnee] = p.joints[kLHip] + s.femur_l.normalized() * kFemur;
  p.joints[kRKnee] = p.joints[kRHip] + s.femur_r.normalized() * kFemur;
  p.joints[kLAnkle] = p.joints[kLKnee] + s.tibia_l.normalized() * kTibia;
  p.joints[kRAnkle] = p.joints[kRKnee] + s.tibia_r.normalized() * kTibia;

  const Vec3 neck = pelvis + t * kSpine;
  p.joints[kLShoulder] = neck + lat * kShoulderHalf;
  p.joints[kRShoulder] = neck - lat * kShoulderHalf;
  p.joints[kLElbow] = p.joints[kLShoulder] + s.uarm_l.normalized() * kUpperArm;
  p.joints[kRElbow] = p.joints[kRShoulder] + s.uarm_r.normalized() * kUpperArm;
  p.joints[kLWrist] = p.joints[kLElbow] + s.farm_l.normalized() * kForearm;
  p.joints[kRWrist] = p.joints[kRElbow] + s.farm_r.normalized() * kForearm;

  p.joints[kNose] = neck + t * kNeckUp + f * kNoseForward;
  p.joints[kLEye] = neck + t * kEyeUp + f * kEyeForward + lat * kEyeSide;
  p.joints[kREye] = neck + t * kEyeUp + f * kEyeForward - lat * kEyeSide;
  p.joints[kLEar] = neck + t * kEarUp + f * kEarForward + lat * kEarSide;
  p.joints[kREar] = neck + t * kEarUp + f * kEarForward - lat * kEarSide;
  return p;
}

std::vector<Skeleton3D> build_library() {
  const Vec3 up{0, 0, 1}, fwd{1, 0, 0}, down{0, 0, -1};
  std::vector<PoseSpec> specs;

  // stand
  specs.push_back({up, fwd,
                   {0.03, 0.04, -1}, {0.03, -0.04, -1},
                   {0, 0.01, -1}, {0, -0.01, -1},
                   {0.02, 0.18, -1}, {0.02, -0.18, -1},
                   {0.05, 0.10, -1}, {0.05, -0.10, -1}});
  // walk, left leg forward
  specs.push_back({{0.08, 0, 1}, fwd,
                   {0.45, 0.05, -0.9}, {-0.35, -0.05, -1},
                   {-0.15, 0, -1}, {0.35, 0, -0.9},
                   {-0.30, 0.15, -1}, {0.35, -0.15, -0.95},
                   {-0.15, 0.05, -1}, {0.55, -0.05, -0.85}});
  // walk, right leg forward
  specs.push_back({{0.08, 0, 1}, fwd,
                   {-0.35, 0.05, -1}, {0.45, -0.05, -0.9},
                   {0.35, 0, -0.9}, {-0.15, 0, -1},
                   {0.35, 0.15, -0.95}, {-0.30, -0.15, -1},
                   {0.55, 0.05, -0.85}, {-0.15, -0.05, -1}});
  // sit
  specs.push_back({{0.12, 0, 1}, fwd,
                   {1, 0.10, 0.02}, {1, -0.10, 0.02},
                   {0.05, 0.02, -1}, {0.05, -0.02, -1},
                   {0.10, 0.20, -1}, {0.10, -0.20, -1},
                   {0.95, 0.05, -0.25}, {0.95, -0.05, -0.25}});
  // crouch
  specs.push_back({{0.65, 0, 0.76}, {1, 0, -0.25},
                   {0.60, 0.16, -0.78}, {0.60, -0.16, -0.78},
                   {-0.50, 0.04, -0.87}, {-0.50, -0.04, -0.87},
                   {0.45, 0.18, -0.90}, {0.45, -0.18, -0.90},
                   {0.70, 0.05, -0.70}, {0.70, -0.05, -0.70}});
  // reach up
  specs.push_back({up, fwd,
                   {0.03, 0.04, -1}, {0.03, -0.04, -1},
                   {0, 0.01, -1}, {0, -0.01, -1},
                   {0.03, 0.14, 1}, {0.03, -0.14, 1},
                   {0, 0.05, 1}, {0, -0.05, 1}});
  // reach forward
  specs.push_back({{0.10, 0, 1}, fwd,
                   {0.03, 0.04, -1}, {0.03, -0.04, -1},
                   {0, 0.01, -1}, {0, -0.01, -1},
                   {1, 0.12, -0.08}, {1, -0.12, -0.08},
                   {1, 0.04, 0.02}, {1, -0.04, 0.02}});
  // lying on the back, head toward +x
  specs.push_back({{1, 0, 0.06}, {0.05, 0, 1},
                   {-1, 0.06, 0.03}, {-1, -0.06, 0.03},
                   {-1, 0.02, 0.02}, {-1, -0.02, 0.02},
                   {-0.90, 0.30, 0.05}, {-0.90, -0.30, 0.05},
                   {-1, 0.08, 0.04}, {-1, -0.08, 0.04}});

  std::vector<Skeleton3D> lib;
  lib.reserve(specs.size());
  for (const auto& s : specs) lib.push_back(assemble(s));
  (void)down;
  return lib;
}

}  // namespace

const std::vector<Skeleton3D>& builtin_pose_library() {
  static const std::vector<Skeleton3D> lib = build_library();
  return lib;
}

Skeleton3D sample_base_pose(Rng& rng, const GeneratorConfig& cfg) {
  const bool external = !cfg.external_poses.empty();
  const std::vector<Skeleton3D>& source =
      external ? cfg.external_poses : builtin_pose_library();
  if (source.empty()) raise(Err::empty_pose_source, "pose source has no poses");
  Skeleton3D pose = source[size_t(rng.uniform_int(u64(source.size())))];
  if (!external) {
    for (auto& j : pose.joints) {
      j.x += rng.normal(0.0, cfg.jitter_sigma_mm);
      j.y += rng.normal(0.0, cfg.jitter_sigma_mm);
      j.z += rng.normal(0.0, cfg.jitter_sigma_mm);
    }
  }
  return pose;
}

Skeleton3D place_in_room(const Skeleton3D& pose, const GeneratorConfig& cfg,
                         Rng& rng) {
  const double half_w = cfg.room_width_m / 2.0;
  const double half_d = cfg.room_depth_m / 2.0;
  const double ox = (cfg.scene_center_x_m + rng.uniform(-half_w, half_w)) * 1000.0;
  const double oy = (cfg.scene_center_y_m + rng.uniform(-half_d, half_d)) * 1000.0;
  const double yaw = rng.uniform(0.0, cfg.yaw_range);
  const Mat3 r = Mat3::rotation_z(yaw);

  Skeleton3D out;
  out.joints.reserve(pose.joints.size());
  double min_z = std::numeric_limits<double>::infinity();
  for (const Vec3& j : pose.joints) {
    Vec3 w = r.mul(j);
    w.x += ox;
    w.y += oy;
    min_z = std::min(min_z, w.z);
    out.joints.push_back(w);
  }
  for (Vec3& j : out.joints) j.z -= min_z;
  return out;
}

Skeleton2D corrupt_2d(const Skeleton2D& ideal, const CameraCalibration& cam,
                      const NoiseModel& noise, Rng& rng) {
  static const auto pairs = bilateral_pairs(builtin_coco17());
  Skeleton2D out = ideal;
  out.visible.assign(out.joints.size(), 1);
  if (out.joints.size() == 17) {
    for (const auto& [l, r] : pairs) {
      if (rng.bernoulli(noise.swap_prob)) {
        std::swap(out.joints[size_t(l)], out.joints[size_t(r)]);
      }
    }
  }
  for (size_t k = 0; k < out.joints.size(); ++k) {
    Pixel2D& px = out.joints[k];
    const bool vis = in_frame(cam, px);
    if (!vis) {
      px.u = std::clamp(px.u, 0.0, double(cam.width - 1));
      px.v = std::clamp(px.v, 0.0, double(cam.height - 1));
      px.u += rng.normal(0.0, noise.oof_border_sigma_px);
      px.v += rng.normal(0.0, noise.oof_border_sigma_px);
    } else {
      px.u += rng.normal(0.0, noise.sigma_px);
      px.v += rng.normal(0.0, noise.sigma_px);
      if (rng.bernoulli(noise.outlier_prob)) {
        px.u += rng.normal(0.0, noise.outlier_sigma_px);
        px.v += rng.normal(0.0, noise.outlier_sigma_px);
      }
    }
    out.visible[k] = vis ? 1 : 0;
  }
  return out;
}

PosePairSample generate_sample(const GeneratorConfig& cfg, i64 index) {
  if (index < 0 || index >= cfg.num_samples) {
    raise(Err::config_error,
          strfmt("sample index %lld outside [0, %lld)", (long long)index,
                 (long long)cfg.num_samples));
  }
  Rng rng = Rng::stream(cfg.seed, u64(index));

  Skeleton3D world;
  std::vector<Skeleton2D> ideal_views;
  bool placed = false;
  for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
    Skeleton3D pose = sample_base_pose(rng, cfg);
    world = place_in_room(pose, cfg, rng);
    try {
      ideal_views.clear();
      for (const auto& cam : cfg.cameras) {
        ideal_views.push_back(project_skeleton(cam, world));
      }
      placed = true;
    } catch (const Error& e) {
      if (e.code() != Err::non_positive_depth) throw;
    }
  }
  if (!placed) {
    raise(Err::resample_exhausted,
          strfmt("sample %lld: pose behind a camera after 100 attempts",
                 (long long)index));
  }

  PosePairSample sample;
  sample.id = index;
  sample.gt_mm = std::move(world);
  sample.views.reserve(cfg.cameras.size());
  for (size_t c = 0; c < cfg.cameras.size(); ++c) {
    sample.views.push_back(
        corrupt_2d(ideal_views[c], cfg.cameras[c], cfg.noise, rng));
  }
  return sample;
}

DatasetSummary generate_dataset(const GeneratorConfig& cfg,
                                const std::string& path) {
  cfg.validate();
  const i64 joints = 17;
  DatasetSummary summary;
  summary.num_samples = cfg.num_samples;
  summary.joints = joints;
  summary.views = i64(cfg.cameras.size());
  std::vector<i64> visible_all(static_cast<size_t>(joints), 0);

  io::FileWriter out(path);
  constexpr i64 kChunk = 256;
  std::vector<std::string> lines;
  for (i64 base = 0; base < cfg.num_samples; base += kChunk) {
    const i64 count = std::min(kChunk, cfg.num_samples - base);
    lines.assign(static_cast<size_t>(count), {});
    std::vector<PosePairSample> chunk(static_cast<size_t>(count));
    kernels::parallel_for(count, 8, [&](i64 lo, i64 hi) {
      for (i64 i = lo; i < hi; ++i) {
        chunk[size_t(i)] = generate_sample(cfg, base + i);
        lines[size_t(i)] = io::sample_to_jsonl(chunk[size_t(i)]);
      }
    });
    for (i64 i = 0; i < count; ++i) {
      const PosePairSample& s = chunk[size_t(i)];
      for (i64 k = 0; k < joints; ++k) {
        bool all = true;
        for (const auto& view : s.views) all = all && view.visible[size_t(k)];
        visible_all[size_t(k)] += all ? 1 : 0;
      }
      out.write_line(lines[size_t(i)]);
    }
  }
  out.close();

  summary.joint_visibility.resize(static_cast<size_t>(joints));
  double acc = 0.0;
  for (i64 k = 0; k < joints; ++k) {
    summary.joint_visibility[size_t(k)] =
        double(visible_all[size_t(k)]) / double(cfg.num_samples);
    acc += summary.joint_visibility[size_t(k)];
  }
  summary.mean_visibility = acc / double(joints);
  return summary;
}

}  // namespace mpl
