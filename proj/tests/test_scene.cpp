#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "support.hpp"
#include "xvtp/scene.hpp"

using namespace xvtp;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "xvtp_test_scene";
  std::filesystem::create_directories(dir);
  return dir / name;
}

Sample translated(const Sample& s, const Point3d& shift) {
  Sample out = s;
  for (Instance& inst : out.instances) {
    for (Point3d& p : inst.polyline) p += shift;
  }
  for (Point2d& p : out.future_bev) p += shift.head<2>();
  out.frame.origin += shift;
  out.camera = make_front_camera(out.frame);
  return out;
}

// Minimal scene in front of a camera at the origin looking along +x.
Sample hand_scene() {
  Sample s;
  Instance target;
  target.id = 0;
  target.kind = InstanceKind::kAgent;
  target.label = std::string(kTargetLabel);
  for (int t = 0; t < 8; ++t) target.polyline.emplace_back(-7.0 + t, 0.0, 0.0);
  s.instances.push_back(target);
  s.target_id = 0;
  for (int t = 1; t <= 12; ++t) s.future_bev.emplace_back(t * 1.0, 0.0);
  s.frame.origin = Point3d(0, 0, 0);
  s.frame.heading = 0.0;
  s.camera = make_front_camera(s.frame);
  return s;
}

Instance lane(int id, const std::vector<Point3d>& pts) {
  Instance l;
  l.id = id;
  l.kind = InstanceKind::kLane;
  l.label = std::string(kInboundLaneLabel);
  l.polyline = pts;
  return l;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  for (std::uint64_t seed : {0ULL, 1ULL, 77ULL}) {
    CHECK(test::scene(seed) == test::scene(seed));
  }
  CHECK_FALSE(test::scene(1) == test::scene(2));
}

TEST_CASE("noiseless straight-only target stays on its lane line") {
  GenConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.straight_only = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Sample s = generate_synthetic_scene(seed, cfg);
    const Instance* inbound = nullptr;
    for (const Instance& inst : s.instances) {
      if (inst.label == kInboundLaneLabel) inbound = &inst;
    }
    REQUIRE(inbound);
    const Point2d a = inbound->polyline.front().head<2>();
    const Point2d d = (inbound->polyline.back().head<2>() - a).normalized();
    auto off_line = [&](const Point2d& p) {
      const Point2d r = p - a;
      return std::abs(r.x() * d.y() - r.y() * d.x());
    };
    for (const Point2d& p : s.future_bev) CHECK(off_line(p) <= 1e-9);
    for (const Point3d& p : s.target().polyline) CHECK(off_line(p.head<2>()) <= 1e-9);
  }
}

TEST_CASE("two branches are chosen evenly") {
  GenConfig cfg;
  int first = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Sample s = generate_synthetic_scene(scene_seed(99, i), cfg);
    const int b = chosen_branch(s);
    REQUIRE((b == 0 || b == 1));
    first += b == 0;
  }
  const double freq = static_cast<double>(first) / n;
  CHECK(freq >= 0.48);
  CHECK(freq <= 0.52);
}

TEST_CASE("generated samples validate and have two branch endpoints") {
  for (const Sample& s : generate_dataset(50, 4, GenConfig{})) {
    CHECK_NOTHROW(s.validate());
    CHECK(s.t_obs() == 8);
    CHECK(s.t_pred() == 12);
    const auto ends = branch_endpoints(s);
    REQUIRE(ends.size() == 2);
    const double r = (s.future_bev.back() - s.last_observed()).norm();
    for (const Point2d& e : ends) CHECK(std::abs((e - s.last_observed()).norm() - r) <= 1e-6);
    // The chosen branch's reference point sits near the true endpoint.
    CHECK((ends[chosen_branch(s)] - s.future_bev.back()).norm() < 2.0);
  }
}

TEST_CASE("dataset streams differ per index") {
  const auto data = generate_dataset(20, 5, GenConfig{});
  std::set<double> headings;
  for (const Sample& s : data) headings.insert(s.frame.heading);
  CHECK(headings.size() == data.size());
  CHECK(data[3] == generate_synthetic_scene(scene_seed(5, 3), GenConfig{}));
}

TEST_CASE("bev vectorization") {
  const Sample s = test::scene(12);
  const VectorizedView v = vectorize_bev(s);
  const int target = s.instance_index(s.target_id);
  CHECK(v.valid_count(target) == 7);
  const auto block = v.instance_block(target);
  for (int k = 0; k + 1 < 7; ++k) {
    CHECK(block(k + 1, feature::kTime) > block(k, feature::kTime));
  }
  CHECK(block(0, feature::kIsTarget) == 1.0);
  for (int j = 0; j < v.num_instances(); ++j) {
    CHECK(v.instance_visible[j]);
    CHECK(v.instance_labels[j] == s.instances[j].label);
    CHECK(v.instance_ids[j] == s.instances[j].id);
    const auto b = v.instance_block(j);
    const int valid = v.valid_count(j);
    CHECK(valid == static_cast<int>(s.instances[j].polyline.size()) - 1);
    for (int k = 0; k < b.rows(); ++k) {
      const double onehot = b(k, feature::kIsTarget) + b(k, feature::kIsOtherAgent) + b(k, feature::kIsLane);
      if (k < valid) {
        CHECK(onehot == 1.0);
        if (s.instances[j].kind == InstanceKind::kLane) CHECK(b(k, feature::kTime) == 0.0);
      } else {
        CHECK(b.row(k).isZero(0.0));
      }
    }
  }
  // The first target vector starts at the frame origin.
  CHECK(std::abs(block(0, feature::kStartX)) <= 1e-9);
  CHECK(std::abs(block(0, feature::kStartY)) <= 1e-9);
}

TEST_CASE("vectorization is invariant to moving world and frame together") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-500, 500);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Sample s = test::scene(seed);
    const Sample t = translated(s, Point3d(u(rng), u(rng), 0.0));
    const VectorizedView a = vectorize_bev(s);
    const VectorizedView b = vectorize_bev(t);
    CHECK((a.features - b.features).cwiseAbs().maxCoeff() <= 1e-9);
    const VectorizedView fa = vectorize_fpv(s);
    const VectorizedView fb = vectorize_fpv(t);
    CHECK(fa.instance_visible == fb.instance_visible);
    CHECK((fa.features - fb.features).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("fpv vectorization drops an instance behind the camera") {
  Sample s = hand_scene();
  s.instances.push_back(lane(1, {{-30, 0, 0}, {-20, 0, 0}, {-10, 0, 0}}));
  const VectorizedView v = vectorize_fpv(s);
  CHECK_FALSE(v.instance_visible[1]);
  CHECK(v.instance_block(1).isZero(0.0));
  CHECK(v.instance_labels == vectorize_bev(s).instance_labels);
}

TEST_CASE("fpv vectorization matches a per-vertex visibility oracle") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> fwd(-10, 80);
  std::uniform_real_distribution<double> side(-60, 60);
  for (int trial = 0; trial < 200; ++trial) {
    Sample s = hand_scene();
    // A lane sweeping across the image border.
    std::vector<Point3d> pts;
    const Point3d start(fwd(rng), side(rng), 0.0);
    const Point3d dir = Point3d(fwd(rng), side(rng), 0.0).normalized();
    for (int k = 0; k < 6; ++k) pts.push_back(start + 6.0 * k * dir);
    s.instances.push_back(lane(1, pts));
    const VectorizedView v = vectorize_fpv(s);
    int expected = 0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      expected += is_visible(pts[k], s.camera) && is_visible(pts[k + 1], s.camera);
    }
    CHECK(v.valid_count(1) == expected);
    CHECK(v.instance_visible[1] == (expected > 0));
    const auto b = v.instance_block(1);
    int row = 0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      const auto p = project_to_fpv(pts[k], s.camera);
      const auto q = project_to_fpv(pts[k + 1], s.camera);
      if (!p || !q) continue;
      CHECK(std::abs(b(row, feature::kStartX) - p->x() / s.camera.image_width) <= 1e-12);
      CHECK(std::abs(b(row, feature::kEndY) - q->y() / s.camera.image_height) <= 1e-12);
      ++row;
    }
  }
}

TEST_CASE("fpv coordinates are normalized") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const VectorizedView v = vectorize_fpv(test::scene(seed));
    for (Eigen::Index r = 0; r < v.features.rows(); ++r) {
      if (v.features(r, feature::kValid) == 0.0) continue;
      for (int c : {feature::kStartX, feature::kStartY, feature::kEndX, feature::kEndY}) {
        CHECK(v.features(r, c) >= 0.0);
        CHECK(v.features(r, c) <= 1.0);
      }
    }
  }
}

TEST_CASE("filter_unqualified") {
  const auto data = generate_dataset(60, 6, GenConfig{});
  CHECK(filter_unqualified(data, 0.0) == data);

  Sample one = hand_scene();
  // Near ground points fall below the image; start the future 5 m ahead.
  for (int t = 0; t < 12; ++t) one.future_bev[t] = Point2d(5.0 + t, 0.0);
  one.future_bev.back() = Point2d(-5.0, 0.0);  // behind the camera
  CHECK(filter_unqualified({one}, 1.0).empty());
  CHECK(filter_unqualified({one}, 0.9).size() == 1);

  for (double fraction : {0.25, 0.5, 0.75, 1.0}) {
    std::vector<Sample> expected;
    for (const Sample& s : data) {
      int visible = 0;
      for (const Point2d& p : s.future_bev) visible += is_visible(Point3d(p.x(), p.y(), 0.0), s.camera);
      if (visible >= fraction * s.t_pred()) expected.push_back(s);
    }
    const auto kept = filter_unqualified(data, fraction);
    CHECK(kept == expected);
    CHECK(filter_unqualified(kept, fraction) == kept);
  }
  CHECK_THROWS(filter_unqualified(data, 1.5));
}

TEST_CASE("dataset round trip") {
  GenConfig cfg;
  cfg.branches = 3;
  const auto data = generate_dataset(100, 13, cfg);
  const auto path = temp_path("round_trip.jsonl");
  save_dataset(data, path);
  const auto back = load_dataset(path);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(back[i] == data[i]);
}

TEST_CASE("dataset errors") {
  const auto data = generate_dataset(3, 2, GenConfig{});
  const auto path = temp_path("truncated.jsonl");
  {
    std::ofstream out(path);
    out << sample_to_json_line(data[0]) << '\n' << sample_to_json_line(data[1]) << '\n';
    const std::string third = sample_to_json_line(data[2]);
    out << third.substr(0, third.size() / 2);
  }
  try {
    load_dataset(path);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(e.line() == 3);
  }

  const auto empty = temp_path("empty.jsonl");
  { std::ofstream out(empty); }
  CHECK(load_dataset(empty).empty());

  auto doc = nlohmann::json::parse(sample_to_json_line(data[0]));
  doc.erase("target_id");
  try {
    sample_from_json_line(doc.dump(), 7);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(e.line() == 7);
    CHECK(e.field() == "target_id");
  }

  CHECK_THROWS_AS(load_dataset(temp_path("missing.jsonl")), std::runtime_error);
}

TEST_CASE("sample validation rejects broken invariants") {
  Sample s = hand_scene();
  CHECK_NOTHROW(s.validate());
  Sample bad = s;
  bad.target_id = 42;
  CHECK_THROWS(bad.validate());
  bad = s;
  bad.camera.rotation(0, 0) = 2.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
