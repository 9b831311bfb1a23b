#include "mpl/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace mpl {

Mat3 Mat3::identity() {
  Mat3 r;
  r(0, 0) = r(1, 1) = r(2, 2) = 1.0;
  return r;
}

Mat3 Mat3::rotation_z(double angle) {
  Mat3 r = identity();
  const double c = std::cos(angle), s = std::sin(angle);
  r(0, 0) = c;
  r(0, 1) = -s;
  r(1, 0) = s;
  r(1, 1) = c;
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
  }
  return r;
}

double Mat3::det() const {
  const auto& a = *this;
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

Vec3 Mat3::mul(const Vec3& v) const {
  const auto& a = *this;
  return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
          a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
          a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
}

Mat3 Mat3::mul(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
      r(i, j) = s;
    }
  }
  return r;
}

void CameraCalibration::validate() const {
  const Mat3 rtr = rotation.transposed().mul(rotation);
  const Mat3 eye = Mat3::identity();
  for (int i = 0; i < 9; ++i) {
    if (std::abs(rtr.m[size_t(i)] - eye.m[size_t(i)]) > 1e-9) {
      raise(Err::config_error,
            strfmt("camera '%s': rotation is not orthonormal (R^T R deviates "
                   "by %g)",
                   name.c_str(), std::abs(rtr.m[size_t(i)] - eye.m[size_t(i)])));
    }
  }
  if (std::abs(rotation.det() - 1.0) > 1e-9) {
    raise(Err::config_error,
          strfmt("camera '%s': rotation determinant %.12f is not +1",
                 name.c_str(), rotation.det()));
  }
  if (!(fx() > 0.0) || !(fy() > 0.0)) {
    raise(Err::config_error,
          strfmt("camera '%s': focal lengths must be positive", name.c_str()));
  }
  if (width <= 0 || height <= 0) {
    raise(Err::config_error,
          strfmt("camera '%s': width/height must be positive", name.c_str()));
  }
  if (intrinsics(2, 0) != 0.0 || intrinsics(2, 1) != 0.0 ||
      intrinsics(2, 2) != 1.0) {
    raise(Err::config_error,
          strfmt("camera '%s': intrinsics row 3 must be (0, 0, 1)",
                 name.c_str()));
  }
  if (intrinsics(0, 1) != 0.0 || intrinsics(1, 0) != 0.0) {
    raise(Err::config_error,
          strfmt("camera '%s': skew is unsupported", name.c_str()));
  }
}

Vec3 CameraCalibration::center() const {
  return rotation.transposed().mul(translation) * -1.0;
}

CameraCalibration make_lookat_camera(const std::string& name, Vec3 position,
                                     Vec3 target, double fx, double fy,
                                     i64 width, i64 height) {
  const Vec3 up{0, 0, 1};
  const Vec3 z = (target - position).normalized();
  const Vec3 xv = z.cross(up);
  if (xv.norm() < 1e-12) {
    raise(Err::config_error,
          "make_lookat_camera: view direction parallel to the up axis");
  }
  const Vec3 x = xv.normalized();
  const Vec3 y = z.cross(x);
  CameraCalibration cam;
  cam.name = name;
  cam.intrinsics = Mat3::identity();
  cam.intrinsics(0, 0) = fx;
  cam.intrinsics(1, 1) = fy;
  cam.intrinsics(0, 2) = double(width) / 2.0;
  cam.intrinsics(1, 2) = double(height) / 2.0;
  cam.rotation(0, 0) = x.x;
  cam.rotation(0, 1) = x.y;
  cam.rotation(0, 2) = x.z;
  cam.rotation(1, 0) = y.x;
  cam.rotation(1, 1) = y.y;
  cam.rotation(1, 2) = y.z;
  cam.rotation(2, 0) = z.x;
  cam.rotation(2, 1) = z.y;
  cam.rotation(2, 2) = z.z;
  cam.translation = cam.rotation.mul(position) * -1.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

Pixel2D project(const CameraCalibration& cam, const Point3D& point) {
  const Vec3 pc = cam.rotation.mul(point) + cam.translation;
  if (pc.z <= 1e-9) {
    raise(Err::non_positive_depth,
          strfmt("camera '%s': point depth %.3g is not positive",
                 cam.name.c_str(), pc.z));
  }
  return {cam.fx() * pc.x / pc.z + cam.cx(), cam.fy() * pc.y / pc.z + cam.cy()};
}

bool in_frame(const CameraCalibration& cam, const Pixel2D& px) {
  return px.u >= 0.0 && px.u < double(cam.width) && px.v >= 0.0 &&
         px.v < double(cam.height);
}

namespace detail {

void svd_mx4(std::vector<std::array<double, 4>>& a,
             std::array<double, 4>& sigma,
             std::array<std::array<double, 4>, 4>& v) {
  constexpr double tol = 1e-14;
  constexpr int max_sweeps = 60;
  const i64 m = i64(a.size());

  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) v[size_t(i)][size_t(j)] = i == j ? 1.0 : 0.0;
  }

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < 3; ++p) {
      for (int q = p + 1; q < 4; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (i64 r = 0; r < m; ++r) {
          app += a[size_t(r)][size_t(p)] * a[size_t(r)][size_t(p)];
          aqq += a[size_t(r)][size_t(q)] * a[size_t(r)][size_t(q)];
          apq += a[size_t(r)][size_t(p)] * a[size_t(r)][size_t(q)];
        }
        if (std::abs(apq) <= tol * std::sqrt(app * aqq)) continue;
        rotated = true;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (i64 r = 0; r < m; ++r) {
          const double ap = a[size_t(r)][size_t(p)];
          const double aq = a[size_t(r)][size_t(q)];
          a[size_t(r)][size_t(p)] = c * ap - s * aq;
          a[size_t(r)][size_t(q)] = s * ap + c * aq;
        }
        for (int r = 0; r < 4; ++r) {
          const double vp = v[size_t(r)][size_t(p)];
          const double vq = v[size_t(r)][size_t(q)];
          v[size_t(r)][size_t(p)] = c * vp - s * vq;
          v[size_t(r)][size_t(q)] = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::array<int, 4> order{0, 1, 2, 3};
  for (int j = 0; j < 4; ++j) {
    double s = 0.0;
    for (i64 r = 0; r < m; ++r) s += a[size_t(r)][size_t(j)] * a[size_t(r)][size_t(j)];
    sigma[size_t(j)] = std::sqrt(s);
  }
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return sigma[size_t(x)] > sigma[size_t(y)]; });
  const auto sig = sigma;
  const auto vv = v;
  for (int j = 0; j < 4; ++j) {
    sigma[size_t(j)] = sig[size_t(order[size_t(j)])];
    for (int r = 0; r < 4; ++r) {
      v[size_t(r)][size_t(j)] = vv[size_t(r)][size_t(order[size_t(j)])];
    }
  }
}

}  // namespace detail

Point3D triangulate_point(
    const std::vector<std::pair<const CameraCalibration*, Pixel2D>>& obs) {
  if (obs.size() < 2) {
    raise(Err::insufficient_views,
          strfmt("triangulation needs >= 2 observations, got %zu", obs.size()));
  }
  // Rows in intrinsics-normalized coordinates: P = [R | t] and the two
  // equations x_n * P.row3 - P.row1, y_n * P.row3 - P.row2 per view.
  std::vector<std::array<double, 4>> a;
  a.reserve(obs.size() * 2);
  for (const auto& [cam, px] : obs) {
    const double xn = (px.u - cam->cx()) / cam->fx();
    const double yn = (px.v - cam->cy()) / cam->fy();
    const Mat3& r = cam->rotation;
    const Vec3& t = cam->translation;
    a.push_back({xn * r(2, 0) - r(0, 0), xn * r(2, 1) - r(0, 1),
                 xn * r(2, 2) - r(0, 2), xn * t.z - t.x});
    a.push_back({yn * r(2, 0) - r(1, 0), yn * r(2, 1) - r(1, 1),
                 yn * r(2, 2) - r(1, 2), yn * t.z - t.y});
  }

  std::array<double, 4> sigma;
  std::array<std::array<double, 4>, 4> v;
  detail::svd_mx4(a, sigma, v);

  if (sigma[2] - sigma[3] <= 1e-12 * std::max(sigma[0], 1e-300)) {
    raise(Err::degenerate_geometry,
          strfmt("smallest singular values %.3e and %.3e are not separated",
                 sigma[2], sigma[3]));
  }
  const double w = v[3][3];
  if (std::abs(w) < 1e-12) {
    raise(Err::non_finite_result,
          strfmt("homogeneous solution at infinity (|w| = %.3e)", std::abs(w)));
  }
  return {v[0][3] / w, v[1][3] / w, v[2][3] / w};
}

TriangulatedSkeleton triangulate_skeleton(
    const std::vector<std::pair<const CameraCalibration*, const Skeleton2D*>>&
        views) {
  if (views.size() < 2) {
    raise(Err::insufficient_views,
          strfmt("skeleton triangulation needs >= 2 views, got %zu",
                 views.size()));
  }
  const i64 joints = views[0].second->joint_count();
  for (const auto& [cam, skel] : views) {
    if (skel->joint_count() != joints) {
      raise(Err::shape_mismatch,
            strfmt("view '%s' has %lld joints, expected %lld",
                   cam->name.c_str(), (long long)skel->joint_count(),
                   (long long)joints));
    }
  }
  TriangulatedSkeleton out;
  out.skeleton.joints.resize(size_t(joints));
  out.failed.assign(size_t(joints), 0);
  std::vector<std::pair<const CameraCalibration*, Pixel2D>> obs;
  obs.reserve(views.size());
  for (i64 k = 0; k < joints; ++k) {
    obs.clear();
    for (const auto& [cam, skel] : views) {
      obs.emplace_back(cam, skel->joints[size_t(k)]);
    }
    try {
      const Point3D p = triangulate_point(obs);
      out.skeleton.joints[size_t(k)] = p * 1000.0;  // meters -> millimeters
    } catch (const Error& e) {
      if (e.code() == Err::degenerate_geometry ||
          e.code() == Err::non_finite_result) {
        out.failed[size_t(k)] = 1;
        out.failed_count += 1;
        out.skeleton.joints[size_t(k)] = {0, 0, 0};
      } else {
        throw;
      }
    }
  }
  return out;
}

Skeleton2D project_skeleton(const CameraCalibration& cam,
                            const Skeleton3D& skel_mm) {
  Skeleton2D out;
  out.joints.reserve(skel_mm.joints.size());
  out.visible.reserve(skel_mm.joints.size());
  for (const Vec3& j : skel_mm.joints) {
    const Pixel2D px = project(cam, j * 1e-3);
    out.joints.push_back(px);
    out.visible.push_back(in_frame(cam, px) ? 1 : 0);
  }
  return out;
}

}  // namespace mpl
