#include <doctest.h>

#include <chrono>
#include <cmath>

#include "mpl/geometry.hpp"
#include "mpl/rng.hpp"
#include "test_util.hpp"

using namespace mpl;
using mpl::test::random_camera;
using mpl::test::random_point_in_front;

namespace {

CameraCalibration simple_camera(double fx, double fy, double cx, double cy,
                                i64 w = 1920, i64 h = 1080) {
  CameraCalibration cam;
  cam.name = "simple";
  cam.intrinsics = Mat3::identity();
  cam.intrinsics(0, 0) = fx;
  cam.intrinsics(1, 1) = fy;
  cam.intrinsics(0, 2) = cx;
  cam.intrinsics(1, 2) = cy;
  cam.rotation = Mat3::identity();
  cam.translation = {0, 0, 0};
  cam.width = w;
  cam.height = h;
  return cam;
}

}  // namespace

TEST_CASE("optical-axis point projects to the principal point") {
  const auto cam = simple_camera(1000, 1000, 320, 240, 640, 480);
  const Pixel2D px = project(cam, {0, 0, 2});
  REQUIRE(px.u == doctest::Approx(320.0).epsilon(1e-15));
  REQUIRE(px.v == doctest::Approx(240.0).epsilon(1e-15));
}

TEST_CASE("unit-depth scaling") {
  const auto cam = simple_camera(1000, 1000, 0, 0);
  const Pixel2D px = project(cam, {0.1, 0.2, 1.0});
  REQUIRE(px.u == doctest::Approx(100.0).epsilon(1e-15));
  REQUIRE(px.v == doctest::Approx(200.0).epsilon(1e-15));
}

TEST_CASE("rotated camera matches a hand-composed matrix chain") {
  // camera at world (2,0,0) looking at the origin: the optical axis is -x,
  // reached by a 90 degree rotation about the world y axis.
  CameraCalibration cam;
  cam.name = "rot";
  cam.intrinsics = Mat3::identity();
  cam.intrinsics(0, 0) = 800;
  cam.intrinsics(1, 1) = 820;
  cam.intrinsics(0, 2) = 960;
  cam.intrinsics(1, 2) = 540;
  // R = Ry(+90deg) with rows (0,0,-1), (0,1,0), (1,0,0) maps world -x to
  // camera +z; camera x = world -z... choose the canonical decomposition:
  // z_cam = (-1,0,0), x_cam = z x up = (0,1,0)? cross((-1,0,0),(0,0,1)) =
  // (0*1-0*0, 0*0-(-1)*1, 0) = (0,1,0); y_cam = z x x = (0,0,-1).
  cam.rotation(0, 0) = 0;  cam.rotation(0, 1) = 1;  cam.rotation(0, 2) = 0;
  cam.rotation(1, 0) = 0;  cam.rotation(1, 1) = 0;  cam.rotation(1, 2) = -1;
  cam.rotation(2, 0) = -1; cam.rotation(2, 1) = 0;  cam.rotation(2, 2) = 0;
  const Vec3 center{2, 0, 0};
  cam.translation = cam.rotation.mul(center) * -1.0;
  cam.width = 1920;
  cam.height = 1080;
  cam.validate();

  const Point3D p{0, 0, 0.5};
  // independent oracle: explicit arithmetic of K [R|t]
  const double xc = 0 * p.x + 1 * p.y + 0 * p.z + cam.translation.x;
  const double yc = 0 * p.x + 0 * p.y - 1 * p.z + cam.translation.y;
  const double zc = -1 * p.x + 0 * p.y + 0 * p.z + cam.translation.z;
  REQUIRE(zc > 0);
  const double want_u = 800 * xc / zc + 960;
  const double want_v = 820 * yc / zc + 540;

  const Pixel2D px = project(cam, p);
  REQUIRE(px.u == doctest::Approx(want_u).epsilon(1e-14));
  REQUIRE(px.v == doctest::Approx(want_v).epsilon(1e-14));
}

TEST_CASE("points behind the camera raise NonPositiveDepth") {
  const auto cam = simple_camera(1000, 1000, 0, 0);
  REQUIRE_THROWS_AS(project(cam, {0, 0, -1}), Error);
  try {
    project(cam, {0, 0, 0});
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::non_positive_depth);
  }
}

TEST_CASE("projection is scale-invariant along the camera ray") {
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    const auto cam = random_camera(rng, i);
    const Point3D p = random_point_in_front(rng, cam);
    const Vec3 c = cam.center();
    const double lam = rng.uniform(0.3, 3.0);
    const Point3D p2 = c + (p - c) * lam;
    const Pixel2D a = project(cam, p);
    const Pixel2D b = project(cam, p2);
    REQUIRE(a.u == doctest::Approx(b.u).epsilon(1e-9));
    REQUIRE(a.v == doctest::Approx(b.v).epsilon(1e-9));
  }
}

TEST_CASE("in_frame boundary semantics") {
  const auto cam = simple_camera(1000, 1000, 960, 540);
  REQUIRE(in_frame(cam, {0, 0}));
  REQUIRE_FALSE(in_frame(cam, {1920, 500}));
  REQUIRE_FALSE(in_frame(cam, {-0.5, 10}));
  REQUIRE(in_frame(cam, {1919.999, 1079.999}));
  REQUIRE_FALSE(in_frame(cam, {500, 1080}));
}

TEST_CASE("two-view triangulation recovers an exact point") {
  Rng rng(7);
  const auto cam0 = random_camera(rng, 0);
  const auto cam1 = random_camera(rng, 1);
  const Point3D p{0.5, 1.0, 2.0};
  const Pixel2D u0 = project(cam0, p);
  const Pixel2D u1 = project(cam1, p);
  const Point3D q = triangulate_point({{&cam0, u0}, {&cam1, u1}});
  REQUIRE((q - p).norm() <= 1e-6);
}

TEST_CASE("three-view triangulation of the world origin") {
  Rng rng(8);
  std::vector<CameraCalibration> cams;
  std::vector<std::pair<const CameraCalibration*, Pixel2D>> obs;
  for (int i = 0; i < 3; ++i) cams.push_back(random_camera(rng, i));
  const Point3D origin{0, 0, 0};
  for (const auto& cam : cams) obs.emplace_back(&cam, project(cam, origin));
  const Point3D q = triangulate_point(obs);
  REQUIRE(q.norm() <= 1e-6);
}

TEST_CASE("one observation raises InsufficientViews") {
  Rng rng(9);
  const auto cam = random_camera(rng, 0);
  try {
    triangulate_point({{&cam, {100, 100}}});
    FAIL("expected InsufficientViews");
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::insufficient_views);
  }
}

TEST_CASE("identical rays raise DegenerateGeometry") {
  Rng rng(10);
  const auto cam = random_camera(rng, 0);
  try {
    triangulate_point({{&cam, {300, 300}}, {&cam, {300, 300}}});
    FAIL("expected DegenerateGeometry");
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::degenerate_geometry);
  }
}

TEST_CASE("round trip over 1000 random camera pairs stays under 1e-6 m") {
  Rng rng(12);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 1000; ++i) {
    const auto cam0 = random_camera(rng, 2 * i);
    const auto cam1 = random_camera(rng, 2 * i + 1);
    const Point3D p = random_point_in_front(rng, cam0);
    Pixel2D u0, u1;
    try {
      u0 = project(cam0, p);
      u1 = project(cam1, p);
    } catch (const Error& e) {
      if (e.code() == Err::non_positive_depth) continue;  // behind cam1
      throw;
    }
    const Point3D q = triangulate_point({{&cam0, u0}, {&cam1, u1}});
    CAPTURE(i);
    REQUIRE((q - p).norm() <= 1e-6);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  REQUIRE(secs < 2.0);
}

TEST_CASE("triangulation is independent of observation order") {
  Rng rng(13);
  std::vector<CameraCalibration> cams;
  for (int i = 0; i < 4; ++i) cams.push_back(random_camera(rng, i));
  const Point3D p{0.2, -0.4, 0.3};
  std::vector<std::pair<const CameraCalibration*, Pixel2D>> obs;
  for (const auto& cam : cams) obs.emplace_back(&cam, project(cam, p));
  const Point3D a = triangulate_point(obs);
  std::swap(obs[0], obs[3]);
  std::swap(obs[1], obs[2]);
  const Point3D b = triangulate_point(obs);
  REQUIRE((a - b).norm() <= 1e-9);
}

TEST_CASE("skeleton round trip and perturbation monotonicity") {
  const auto cams = mpl::test::rig2_wide();
  Skeleton3D skel;
  Rng rng(14);
  for (int k = 0; k < 17; ++k) {
    skel.joints.push_back({rng.uniform(-300, 300), rng.uniform(-300, 300),
                           rng.uniform(100, 1800)});
  }
  const Skeleton2D v0 = project_skeleton(cams[0], skel);
  const Skeleton2D v1 = project_skeleton(cams[1], skel);
  const auto tri = triangulate_skeleton({{&cams[0], &v0}, {&cams[1], &v1}});
  REQUIRE(tri.failed_count == 0);
  double err = 0.0;
  for (int k = 0; k < 17; ++k) {
    err += (tri.skeleton.joints[size_t(k)] - skel.joints[size_t(k)]).norm();
  }
  err /= 17.0;
  REQUIRE(err <= 1e-3);  // millimeters

  Skeleton2D v0p = v0;
  v0p.joints[5].u += 10.0;
  const auto tri2 = triangulate_skeleton({{&cams[0], &v0p}, {&cams[1], &v1}});
  const double e_clean = (tri.skeleton.joints[5] - skel.joints[5]).norm();
  const double e_pert = (tri2.skeleton.joints[5] - skel.joints[5]).norm();
  REQUIRE(e_pert > e_clean);
}

TEST_CASE("skeleton triangulation needs two views") {
  const auto cams = mpl::test::rig2();
  Skeleton2D v0;
  v0.joints.assign(17, {100, 100});
  v0.visible.assign(17, 1);
  try {
    triangulate_skeleton({{&cams[0], &v0}});
    FAIL("expected InsufficientViews");
  } catch (const Error& e) {
    REQUIRE(e.code() == Err::insufficient_views);
  }
}

TEST_CASE("degenerate joints are marked, not fatal") {
  const auto cams = mpl::test::rig2();
  Skeleton2D v0, v1;
  v0.joints.assign(17, {100, 100});
  v0.visible.assign(17, 1);
  v1 = v0;
  // same camera twice: every joint is degenerate
  const auto tri = triangulate_skeleton({{&cams[0], &v0}, {&cams[0], &v1}});
  REQUIRE(tri.failed_count == 17);
  for (auto f : tri.failed) REQUIRE(f == 1);
}

TEST_CASE("camera validation catches broken calibrations") {
  auto cam = simple_camera(1000, 1000, 960, 540);
  cam.validate();

  auto bad = cam;
  bad.rotation(0, 0) = 2.0;
  REQUIRE_THROWS_AS(bad.validate(), Error);

  bad = cam;
  bad.intrinsics(0, 0) = -5;
  REQUIRE_THROWS_AS(bad.validate(), Error);

  bad = cam;
  bad.intrinsics(2, 2) = 0.5;
  REQUIRE_THROWS_AS(bad.validate(), Error);

  bad = cam;
  bad.width = 0;
  REQUIRE_THROWS_AS(bad.validate(), Error);

  // reflection: orthonormal but det -1
  bad = cam;
  bad.rotation(0, 0) = -1;
  REQUIRE_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("lookat cameras satisfy the calibration invariants") {
  Rng rng(15);
  for (int i = 0; i < 100; ++i) {
    const auto cam = random_camera(rng, i);
    cam.validate();
    // camera center maps to zero depth
    const Vec3 c = cam.center();
    const Vec3 pc = cam.rotation.mul(c) + cam.translation;
    REQUIRE(pc.norm() < 1e-9);
  }
}
