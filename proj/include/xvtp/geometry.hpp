#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string_view>

#include <Eigen/Dense>

namespace xvtp {

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Point3 = Eigen::Matrix<Scalar, 3, 1>;

using Point2d = Point2<double>;
using Point3d = Point3<double>;

enum class ViewId { kBev, kFpv };

constexpr std::string_view view_name(ViewId view) {
  return view == ViewId::kBev ? "bev" : "fpv";
}

// Points closer than this to the image plane are never visible.
inline constexpr double kDepthEpsilon = 0.1;  // m

// Pinhole front camera. The extrinsic maps world to camera coordinates
// (x right, y down, z along the optical axis).
template <typename Scalar>
struct CameraModel {
  Scalar focal_x = 800;
  Scalar focal_y = 800;
  Scalar principal_x = 640;
  Scalar principal_y = 360;
  Scalar image_width = 1280;
  Scalar image_height = 720;
  Eigen::Matrix<Scalar, 3, 3> rotation = Eigen::Matrix<Scalar, 3, 3>::Identity();
  Point3<Scalar> translation = Point3<Scalar>::Zero();

  bool valid() const {
    const auto orthonormality =
        (rotation.transpose() * rotation - Eigen::Matrix<Scalar, 3, 3>::Identity())
            .cwiseAbs()
            .maxCoeff();
    return focal_x > 0 && focal_y > 0 && image_width > 0 && image_height > 0 &&
           orthonormality <= Scalar(1e-9) && rotation.allFinite() &&
           translation.allFinite();
  }

  Eigen::Matrix<Scalar, 3, 3> intrinsics() const {
    Eigen::Matrix<Scalar, 3, 3> k;
    k << focal_x, 0, principal_x, 0, focal_y, principal_y, 0, 0, 1;
    return k;
  }
};

using Camera = CameraModel<double>;

// Fixed per-sequence frame anchored at the target's first observed position.
template <typename Scalar>
struct AbsoluteFrame {
  Point3<Scalar> origin = Point3<Scalar>::Zero();
  Scalar heading = 0;  // rad, in [-pi, pi)

  bool valid() const {
    return origin.allFinite() && heading >= -Scalar(std::numbers::pi) &&
           heading < Scalar(std::numbers::pi);
  }
};

using Frame = AbsoluteFrame<double>;

inline double wrap_angle(double angle) {
  double wrapped = std::fmod(angle + std::numbers::pi, 2.0 * std::numbers::pi);
  if (wrapped < 0) wrapped += 2.0 * std::numbers::pi;
  return wrapped - std::numbers::pi;
}

template <typename Scalar>
Point2<Scalar> project_to_bev(const Point3<Scalar>& p) {
  return p.template head<2>();
}

template <typename Scalar>
Point3<Scalar> world_to_camera(const Point3<Scalar>& p, const CameraModel<Scalar>& cam) {
  return cam.rotation * p + cam.translation;
}

// Pinhole projection of a camera-frame point; no visibility test.
template <typename Scalar>
Point2<Scalar> camera_to_pixel(const Point3<Scalar>& pc, const CameraModel<Scalar>& cam) {
  return {cam.focal_x * pc.x() / pc.z() + cam.principal_x,
          cam.focal_y * pc.y() / pc.z() + cam.principal_y};
}

template <typename Scalar>
bool is_visible(const Point3<Scalar>& p, const CameraModel<Scalar>& cam) {
  const Point3<Scalar> pc = world_to_camera(p, cam);
  if (!(pc.z() >= Scalar(kDepthEpsilon))) return false;
  const Point2<Scalar> uv = camera_to_pixel(pc, cam);
  return uv.x() >= 0 && uv.x() <= cam.image_width && uv.y() >= 0 &&
         uv.y() <= cam.image_height;
}

// Returns std::nullopt for points that are not visible.
template <typename Scalar>
std::optional<Point2<Scalar>> project_to_fpv(const Point3<Scalar>& p,
                                             const CameraModel<Scalar>& cam) {
  if (!is_visible(p, cam)) return std::nullopt;
  return camera_to_pixel(world_to_camera(p, cam), cam);
}

template <typename Scalar>
Point3<Scalar> to_absolute_frame(const Point3<Scalar>& p, const AbsoluteFrame<Scalar>& frame) {
  const Point3<Scalar> d = p - frame.origin;
  const Scalar c = std::cos(frame.heading);
  const Scalar s = std::sin(frame.heading);
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z()};
}

template <typename Scalar>
Point3<Scalar> from_absolute_frame(const Point3<Scalar>& q, const AbsoluteFrame<Scalar>& frame) {
  const Scalar c = std::cos(frame.heading);
  const Scalar s = std::sin(frame.heading);
  return Point3<Scalar>{c * q.x() - s * q.y(), s * q.x() + c * q.y(), q.z()} + frame.origin;
}

// Front camera mounted `height` above the frame origin, looking along the
// frame heading.
Camera make_front_camera(const Frame& frame, double height = 1.6);

// Intersects the viewing ray through `pixel` with the world plane z = plane_z.
std::optional<Point3d> backproject_to_plane(const Point2d& pixel, const Camera& cam,
                                            double plane_z);

}  // namespace xvtp
