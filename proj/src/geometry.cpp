#include "xvtp/geometry.hpp"

namespace xvtp {

Camera make_front_camera(const Frame& frame, double height) {
  const double c = std::cos(frame.heading);
  const double s = std::sin(frame.heading);
  const Eigen::Vector3d forward(c, s, 0.0);
  const Eigen::Vector3d right(s, -c, 0.0);
  const Eigen::Vector3d down(0.0, 0.0, -1.0);

  Camera cam;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  const Eigen::Vector3d center = frame.origin + Eigen::Vector3d(0.0, 0.0, height);
  cam.translation = -cam.rotation * center;
  return cam;
}

std::optional<Point3d> backproject_to_plane(const Point2d& pixel, const Camera& cam,
                                            double plane_z) {
  const Eigen::Vector3d ray_cam((pixel.x() - cam.principal_x) / cam.focal_x,
                                (pixel.y() - cam.principal_y) / cam.focal_y, 1.0);
  const Eigen::Matrix3d rt = cam.rotation.transpose();
  const Eigen::Vector3d center = -rt * cam.translation;
  const Eigen::Vector3d dir = rt * ray_cam;
  if (std::abs(dir.z()) < 1e-15) return std::nullopt;
  const double lambda = (plane_z - center.z()) / dir.z();
  if (lambda <= 0) return std::nullopt;
  return center + lambda * dir;
}

}  // namespace xvtp
