#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

#include "mpl/geometry.hpp"
#include "mpl/model.hpp"
#include "mpl/rng.hpp"
#include "mpl/synthgen.hpp"

namespace mpl::test {

// Two-camera rig used across tests: cameras on opposite-ish sides of the
// scene, 1.7 m high, aimed at chest height above the scene center.
inline CameraSet rig2() {
  return {
      make_lookat_camera("cam0", {3.4, 0.3, 1.7}, {0, 0, 1.0}, 1150, 1150,
                         1920, 1080),
      make_lookat_camera("cam1", {-1.4, 3.0, 1.7}, {0, 0, 1.0}, 1150, 1150,
                         1920, 1080),
  };
}

// Wide-angle rig where the whole body stays in frame for small rooms; used
// by round-trip tests that need every joint visible.
inline CameraSet rig2_wide() {
  return {
      make_lookat_camera("w0", {4.0, 0.0, 1.6}, {0, 0, 0.9}, 700, 700, 1920,
                         1080),
      make_lookat_camera("w1", {-1.8, 3.6, 1.6}, {0, 0, 0.9}, 700, 700, 1920,
                         1080),
  };
}

inline MplConfig tiny_mpl_config() {
  MplConfig cfg;
  cfg.joints = 4;
  cfg.views = 2;
  cfg.dim = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  return cfg;
}

// Random camera looking at a point near the origin from a random direction.
inline CameraCalibration random_camera(Rng& rng, int idx) {
  const double az = rng.uniform(0.0, 6.283185307179586);
  const double el = rng.uniform(-0.5, 0.9);
  const double dist = rng.uniform(2.0, 6.0);
  const Vec3 pos{dist * std::cos(az) * std::cos(el),
                 dist * std::sin(az) * std::cos(el), dist * std::sin(el)};
  const Vec3 target{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                    rng.uniform(-0.3, 0.3)};
  const double f = rng.uniform(600.0, 1400.0);
  return make_lookat_camera("r" + std::to_string(idx), pos, target, f,
                            f * rng.uniform(0.95, 1.05), 1920, 1080);
}

// Random world point with camera-frame depth in [0.5, 10] m for `cam`,
// within the central part of the frustum.
inline Point3D random_point_in_front(Rng& rng, const CameraCalibration& cam) {
  const double depth = rng.uniform(0.5, 10.0);
  const double half_w = 0.4 * depth * double(cam.width) / (2.0 * cam.fx());
  const double half_h = 0.4 * depth * double(cam.height) / (2.0 * cam.fy());
  const Vec3 pc{rng.uniform(-half_w, half_w), rng.uniform(-half_h, half_h),
                depth};
  // world = R^T (pc - t)
  return cam.rotation.transposed().mul(pc - cam.translation);
}

class TempDir {
public:
  TempDir() {
    char tmpl[] = "/tmp/mpl_test_XXXXXX";
    path_ = mkdtemp(tmpl);
  }
  ~TempDir() {
    const std::string cmd = "rm -rf '" + path_ + "'";
    if (std::system(cmd.c_str()) != 0) {
      std::fprintf(stderr, "warning: failed to remove %s\n", path_.c_str());
    }
  }
  std::string file(const std::string& name) const { return path_ + "/" + name; }
  const std::string& path() const { return path_; }

private:
  std::string path_;
};

}  // namespace mpl::test
