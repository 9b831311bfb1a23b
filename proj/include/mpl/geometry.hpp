#pragma once

#include <array>
#include <string>
#include <vector>

#include "mpl/common.hpp"
#include "mpl/skeleton_types.hpp"

namespace mpl {

struct Mat3 {
  std::array<double, 9> m{};  // row-major

  double& operator()(int r, int c) { return m[size_t(r * 3 + c)]; }
  double operator()(int r, int c) const { return m[size_t(r * 3 + c)]; }

  static Mat3 identity();
  static Mat3 rotation_z(double angle);  // yaw about the vertical axis
  Mat3 transposed() const;
  double det() const;
  Vec3 mul(const Vec3& v) const;
  Mat3 mul(const Mat3& o) const;
};

// One calibrated view. Rotation/translation map world to camera coordinates:
// x_cam = R * x_world + t, with t in meters. The intrinsic matrix is
// [[fx, 0, cx], [0, fy, cy], [0, 0, 1]] in pixels.
struct CameraCalibration {
  std::string name;
  Mat3 intrinsics;
  Mat3 rotation;
  Vec3 translation;
  i64 width = 0;
  i64 height = 0;

  double fx() const { return intrinsics(0, 0); }
  double fy() const { return intrinsics(1, 1); }
  double cx() const { return intrinsics(0, 2); }
  double cy() const { return intrinsics(1, 2); }

  // ConfigError when any invariant fails (orthonormal det +1 rotation within
  // 1e-9, positive focal lengths and image size, canonical intrinsics zeros).
  void validate() const;

  // World-space camera center -R^T t, meters.
  Vec3 center() const;
};

using CameraSet = std::vector<CameraCalibration>;

// Convenience rig builder: camera at `position` looking at `target`, world
// z-up, principal point at the image center.
CameraCalibration make_lookat_camera(const std::string& name, Vec3 position,
                                     Vec3 target, double fx, double fy,
                                     i64 width, i64 height);

// Perspective projection of a world point (meters). NonPositiveDepth when the
// camera-frame depth is <= 1e-9.
Pixel2D project(const CameraCalibration& cam, const Point3D& point);

bool in_frame(const CameraCalibration& cam, const Pixel2D& px);

// Homogeneous DLT over >= 2 observations, solved by the smallest right
// singular vector of the 2M x 4 system built from intrinsics-normalized
// projection rows. Returns world meters.
Point3D triangulate_point(
    const std::vector<std::pair<const CameraCalibration*, Pixel2D>>& obs);

struct TriangulatedSkeleton {
  Skeleton3D skeleton;            // world millimeters; failed joints are zero
  std::vector<uint8_t> failed;    // per-joint degenerate/unresolvable marks
  i64 failed_count = 0;
};

// Per-joint DLT across all views. Visibility flags are not consulted; the
// baseline consumes estimator output as-is.
TriangulatedSkeleton triangulate_skeleton(
    const std::vector<std::pair<const CameraCalibration*, const Skeleton2D*>>&
        views);

// Projects a skeleton stored in world millimeters; visibility flags record
// in_frame per joint.
Skeleton2D project_skeleton(const CameraCalibration& cam,
                            const Skeleton3D& skel_mm);

namespace detail {
// One-sided Jacobi SVD of an m x 4 system (m >= 2). Returns singular values
// in descending order and the corresponding right singular vectors as
// columns of v. Convergence tolerance 1e-14.
void svd_mx4(std::vector<std::array<double, 4>>& a,
             std::array<double, 4>& sigma,
             std::array<std::array<double, 4>, 4>& v);
}  // namespace detail

}  // namespace mpl
