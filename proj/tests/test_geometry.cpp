#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "support.hpp"
#include "xvtp/geometry.hpp"

using namespace xvtp;

namespace {

// Full 3x4 projection P = K [R | t] applied to homogeneous world points.
std::optional<Point2d> homogeneous_oracle(const Point3d& p, const Camera& cam) {
  Eigen::Matrix4d rt = Eigen::Matrix4d::Identity();
  rt.topLeftCorner<3, 3>() = cam.rotation;
  rt.topRightCorner<3, 1>() = cam.translation;
  Eigen::Matrix<double, 3, 4> proj = Eigen::Matrix<double, 3, 4>::Zero();
  proj.leftCols<3>() = cam.intrinsics();
  const Eigen::Vector4d ph(p.x(), p.y(), p.z(), 1.0);
  const Eigen::Vector4d pc = rt * ph;
  if (pc.z() < kDepthEpsilon) return std::nullopt;
  const Eigen::Vector3d uvw = proj * pc;
  const Point2d uv(uvw.x() / uvw.z(), uvw.y() / uvw.z());
  if (uv.x() < 0 || uv.x() > cam.image_width || uv.y() < 0 || uv.y() > cam.image_height) {
    return std::nullopt;
  }
  return uv;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace

TEST_CASE("project_to_bev drops height") {
  CHECK(project_to_bev(Point3d(0, 0, 0)) == Point2d(0, 0));
  CHECK(project_to_bev(Point3d(3.5, -2.0, 1.6)) == Point2d(3.5, -2.0));
  CHECK(project_to_bev(Point3d(1, 2, 3)) == project_to_bev(Point3d(1, 2, -7)));
}

TEST_CASE("world_to_camera examples") {
  Camera cam;
  const Point3d p(1.5, -2.0, 7.0);
  CHECK(world_to_camera(p, cam) == p);

  cam.translation = Point3d(0, 0, -5);
  CHECK(world_to_camera(Point3d(0, 0, 5), cam).norm() == 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int i = 0; i < 200; ++i) {
    Camera c;
    c.rotation = random_rotation(rng);
    c.translation = Point3d(u(rng), u(rng), u(rng));
    const Point3d q(u(rng), u(rng), u(rng));
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = c.rotation;
    m.topRightCorner<3, 1>() = c.translation;
    const Eigen::Vector4d expected = m * Eigen::Vector4d(q.x(), q.y(), q.z(), 1.0);
    CHECK((world_to_camera(q, c) - expected.head<3>()).norm() <= 1e-9);
  }
}

TEST_CASE("project_to_fpv examples") {
  Camera cam;
  const auto axis = project_to_fpv(Point3d(0, 0, 10), cam);
  REQUIRE(axis);
  CHECK(axis->x() == cam.principal_x);
  CHECK(axis->y() == cam.principal_y);

  cam.focal_x = 1000;
  cam.principal_x = 640;
  const auto uv = project_to_fpv(Point3d(1, 0, 10), cam);
  REQUIRE(uv);
  CHECK(uv->x() == doctest::Approx(740.0).epsilon(1e-15));

  CHECK_FALSE(project_to_fpv(Point3d(0, 0, -1), cam));
}

TEST_CASE("is_visible examples") {
  Camera cam;
  CHECK_FALSE(is_visible(Point3d(0, 0, -3), cam));
  CHECK(is_visible(Point3d(0, 0, 10), cam));
  // u = f x / z + cx = width + 1 at depth 10.
  const double x = (cam.image_width + 1 - cam.principal_x) * 10.0 / cam.focal_x;
  CHECK_FALSE(is_visible(Point3d(x, 0, 10), cam));
}

TEST_CASE("to_absolute_frame examples") {
  Frame f;
  f.origin = Point3d(4, -3, 0.5);
  f.heading = 1.1;
  CHECK(to_absolute_frame(f.origin, f).norm() == 0.0);

  Frame shift;
  shift.origin = Point3d(2, 5, 0);
  CHECK(to_absolute_frame(Point3d(3, 7, 1), shift) == Point3d(1, 2, 1));

  Frame quarter;
  quarter.origin = Point3d(1, 0, 0);
  quarter.heading = std::numbers::pi / 2;
  const Point3d q = to_absolute_frame(Point3d(1, 1, 0), quarter);
  CHECK((q - Point3d(1, 0, 0)).norm() <= 1e-12);
}

TEST_CASE("projection matches the homogeneous oracle on random visible points") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> h(-3.0, 3.0);
  std::uniform_real_distribution<double> spread(-40, 40);
  int visible = 0;
  int attempts = 0;
  while (visible < 1000) {
    REQUIRE(++attempts < 100000);
    Frame f;
    f.origin = Point3d(spread(rng), spread(rng), 0);
    f.heading = wrap_angle(h(rng));
    const Camera cam = make_front_camera(f);
    const Point3d p = f.origin + Point3d(spread(rng), spread(rng), h(rng));
    const auto got = project_to_fpv(p, cam);
    const auto want = homogeneous_oracle(p, cam);
    REQUIRE(got.has_value() == want.has_value());
    if (!got) continue;
    CHECK((*got - *want).norm() <= 1e-9);
    ++visible;
  }
}

TEST_CASE("invisible points never project") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-60, 60);
  const Camera cam = make_front_camera(Frame{});
  for (int i = 0; i < 5000; ++i) {
    const Point3d p(u(rng), u(rng), u(rng) / 10);
    CHECK(is_visible(p, cam) == project_to_fpv(p, cam).has_value());
  }
}

TEST_CASE("back-projection recovers visible points") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> fwd(2, 60);
  std::uniform_real_distribution<double> side(-30, 30);
  std::uniform_real_distribution<double> up(-1.0, 1.0);
  Frame f;
  f.origin = Point3d(10, -4, 0);
  f.heading = 0.7;
  const Camera cam = make_front_camera(f);
  int checked = 0;
  for (int i = 0; i < 3000; ++i) {
    const Point3d p = from_absolute_frame(Point3d(fwd(rng), side(rng), up(rng)), f);
    const auto uv = project_to_fpv(p, cam);
    if (!uv) continue;
    const auto back = backproject_to_plane(*uv, cam, p.z());
    REQUIRE(back);
    CHECK((*back - p).norm() <= 1e-6);
    ++checked;
  }
  CHECK(checked > 500);
}

TEST_CASE("absolute frame is rigid") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-100, 100);
  std::uniform_real_distribution<double> a(-3.14, 3.14);
  for (int i = 0; i < 500; ++i) {
    Frame f;
    f.origin = Point3d(u(rng), u(rng), u(rng));
    f.heading = a(rng);
    const Point3d p(u(rng), u(rng), u(rng));
    const Point3d q(u(rng), u(rng), u(rng));
    const double before = (p - q).norm();
    const double after = (to_absolute_frame(p, f) - to_absolute_frame(q, f)).norm();
    CHECK(std::abs(before - after) <= 1e-9);
    CHECK((from_absolute_frame(to_absolute_frame(p, f), f) - p).norm() <= 1e-9);
  }
}

TEST_CASE("front camera is a valid camera looking along the heading") {
  Frame f;
  f.origin = Point3d(3, 4, 0);
  f.heading = -0.4;
  const Camera cam = make_front_camera(f);
  CHECK(cam.valid());
  const Point3d ahead = from_absolute_frame(Point3d(20, 0, 1.6), f);
  const auto uv = project_to_fpv(ahead, cam);
  REQUIRE(uv);
  CHECK(std::abs(uv->x() - cam.principal_x) <= 1e-9);
  CHECK(std::abs(uv->y() - cam.principal_y) <= 1e-9);
  const Point3d behind = from_absolute_frame(Point3d(-20, 0, 0), f);
  CHECK_FALSE(is_visible(behind, cam));
}

TEST_CASE("wrap_angle range") {
  for (double a = -20; a < 20; a += 0.37) {
    const double w = wrap_angle(a);
    CHECK(w >= -std::numbers::pi);
    CHECK(w < std::numbers::pi);
    CHECK(std::abs(std::remainder(w - a, 2 * std::numbers::pi)) <= 1e-9);
  }
}
