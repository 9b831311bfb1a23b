#pragma once

#include <cmath>
#include <vector>

#include "mpl/common.hpp"

namespace mpl {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
  bool all_finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

// World-frame point in meters.
using Point3D = Vec3;

struct Pixel2D {
  double u = 0, v = 0;
};

// K joints in pixel coordinates with per-joint in-frame flags. The flags are
// metadata for evaluation only and are never fed to models.
struct Skeleton2D {
  std::vector<Pixel2D> joints;
  std::vector<uint8_t> visible;

  i64 joint_count() const { return i64(joints.size()); }
};

// K joints in world millimeters.
struct Skeleton3D {
  std::vector<Vec3> joints;

  i64 joint_count() const { return i64(joints.size()); }
};

}  // namespace mpl
