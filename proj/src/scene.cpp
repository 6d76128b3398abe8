#include "xvtp/scene.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

namespace xvtp {

using json = nlohmann::json;

std::optional<int> branch_of_label(std::string_view label) {
  if (!label.starts_with(kBranchLanePrefix)) return std::nullopt;
  const std::string_view digits = label.substr(kBranchLanePrefix.size());
  int branch = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), branch);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
  return branch;
}

const Instance& Sample::target() const {
  return instances.at(static_cast<std::size_t>(instance_index(target_id)));
}

int Sample::instance_index(int id) const {
  for (std::size_t j = 0; j < instances.size(); ++j) {
    if (instances[j].id == id) return static_cast<int>(j);
  }
  throw std::out_of_range("no instance with id " + std::to_string(id));
}

std::vector<std::optional<Point2d>> Sample::future_fpv() const {
  std::vector<std::optional<Point2d>> out;
  out.reserve(future_bev.size());
  for (const Point2d& p : future_bev) {
    out.push_back(project_to_fpv(Point3d(p.x(), p.y(), 0.0), camera));
  }
  return out;
}

void Sample::validate() const {
  if (instances.empty()) throw std::invalid_argument("sample has no instances");
  std::vector<int> ids;
  for (const Instance& inst : instances) {
    if (inst.polyline.size() < 2) {
      throw std::invalid_argument("instance " + std::to_string(inst.id) +
                                  " has fewer than 2 polyline points");
    }
    for (const Point3d& p : inst.polyline) {
      if (!p.allFinite()) throw std::invalid_argument("non-finite polyline point");
    }
    ids.push_back(inst.id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw std::invalid_argument("duplicate instance ids");
  }
  const Instance& tgt = target();
  if (tgt.kind != InstanceKind::kAgent) {
    throw std::invalid_argument("target_id does not refer to an agent");
  }
  for (const Instance& inst : instances) {
    if (inst.kind == InstanceKind::kAgent && inst.polyline.size() != tgt.polyline.size()) {
      throw std::invalid_argument("agent " + std::to_string(inst.id) +
                                  " has a different observation length than the target");
    }
  }
  if (future_bev.empty()) throw std::invalid_argument("empty future");
  for (const Point2d& p : future_bev) {
    if (!p.allFinite()) throw std::invalid_argument("non-finite future point");
  }
  if (!camera.valid()) throw std::invalid_argument("invalid camera");
  if (!frame.valid()) throw std::invalid_argument("invalid frame");
}

bool Sample::operator==(const Sample& other) const {
  return instances == other.instances && target_id == other.target_id &&
         future_bev == other.future_bev && camera.focal_x == other.camera.focal_x &&
         camera.focal_y == other.camera.focal_y &&
         camera.principal_x == other.camera.principal_x &&
         camera.principal_y == other.camera.principal_y &&
         camera.image_width == other.camera.image_width &&
         camera.image_height == other.camera.image_height &&
         camera.rotation == other.camera.rotation &&
         camera.translation == other.camera.translation && frame.origin == other.frame.origin &&
         frame.heading == other.frame.heading;
}

// ---------------------------------------------------------------------------
// Vectorization.

namespace {

int max_vector_count(const Sample& s) {
  std::size_t longest = 2;
  for (const Instance& inst : s.instances) longest = std::max(longest, inst.polyline.size());
  return static_cast<int>(longest) - 1;
}

void write_type(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row, const Sample& s, const Instance& inst) {
  if (inst.kind == InstanceKind::kLane) {
    row(feature::kIsLane) = 1.0;
  } else if (inst.id == s.target_id) {
    row(feature::kIsTarget) = 1.0;
  } else {
    row(feature::kIsOtherAgent) = 1.0;
  }
}

double time_index(const Instance& inst, std::size_t end_vertex, int t_obs) {
  if (inst.kind == InstanceKind::kLane) return 0.0;
  return static_cast<double>(end_vertex) / t_obs;
}

VectorizedView empty_view(const Sample& s, ViewId view) {
  VectorizedView out;
  out.view = view;
  out.max_vectors = max_vector_count(s);
  out.features = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(s.instances.size()) * out.max_vectors, kFeatureWidth);
  for (const Instance& inst : s.instances) {
    out.instance_ids.push_back(inst.id);
    out.instance_labels.push_back(inst.label);
  }
  out.instance_visible.assign(s.instances.size(), false);
  return out;
}

}  // namespace

int VectorizedView::valid_count(int j) const {
  return static_cast<int>(instance_block(j).col(feature::kValid).sum());
}

VectorizedView vectorize_bev(const Sample& s) {
  VectorizedView out = empty_view(s, ViewId::kBev);
  const int t_obs = s.t_obs();
  for (std::size_t j = 0; j < s.instances.size(); ++j) {
    const Instance& inst = s.instances[j];
    for (std::size_t k = 0; k + 1 < inst.polyline.size(); ++k) {
      auto row = out.features.row(static_cast<Eigen::Index>(j) * out.max_vectors +
                                  static_cast<Eigen::Index>(k));
      const Point3d a = to_absolute_frame(inst.polyline[k], s.frame);
      const Point3d b = to_absolute_frame(inst.polyline[k + 1], s.frame);
      row(feature::kStartX) = a.x();
      row(feature::kStartY) = a.y();
      row(feature::kEndX) = b.x();
      row(feature::kEndY) = b.y();
      write_type(row, s, inst);
      row(feature::kTime) = time_index(inst, k + 1, t_obs);
      row(feature::kValid) = 1.0;
    }
    out.instance_visible[j] = true;
  }
  return out;
}

VectorizedView vectorize_fpv(const Sample& s) {
  VectorizedView out = empty_view(s, ViewId::kFpv);
  const int t_obs = s.t_obs();
  const double w = s.camera.image_width;
  const double h = s.camera.image_height;
  for (std::size_t j = 0; j < s.instances.size(); ++j) {
    const Instance& inst = s.instances[j];
    std::vector<std::optional<Point2d>> pixels;
    pixels.reserve(inst.polyline.size());
    for (const Point3d& p : inst.polyline) {
      const Point3d lifted =
          inst.kind == InstanceKind::kAgent ? Point3d(p.x(), p.y(), 0.0) : p;
      pixels.push_back(project_to_fpv(lifted, s.camera));
    }
    int kept = 0;
    for (std::size_t k = 0; k + 1 < pixels.size(); ++k) {
      if (!pixels[k] || !pixels[k + 1]) continue;
      auto row = out.features.row(static_cast<Eigen::Index>(j) * out.max_vectors + kept);
      row(feature::kStartX) = pixels[k]->x() / w;
      row(feature::kStartY) = pixels[k]->y() / h;
      row(feature::kEndX) = pixels[k + 1]->x() / w;
      row(feature::kEndY) = pixels[k + 1]->y() / h;
      write_type(row, s, inst);
      row(feature::kTime) = time_index(inst, k + 1, t_obs);
      row(feature::kValid) = 1.0;
      ++kept;
    }
    out.instance_visible[j] = kept > 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generation.

void GenConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("GenConfig: " + what); };
  if (branches < 2 || branches > 4) fail("branches must be in [2, 4]");
  if (t_obs < 2) fail("t_obs must be >= 2");
  if (t_pred < 1) fail("t_pred must be >= 1");
  if (!(dt > 0)) fail("dt must be > 0");
  if (!(noise_sigma >= 0)) fail("noise_sigma must be >= 0");
  if (!(lane_half_width > 0)) fail("lane_half_width must be > 0");
  if (max_neighbors < 0) fail("max_neighbors must be >= 0");
  if (!(min_speed > 0) || !(max_speed >= min_speed)) fail("speed range invalid");
  if (!(lane_vertex_spacing > 0)) fail("lane_vertex_spacing must be > 0");
  if (lane_segment_vertices < 2) fail("lane_segment_vertices must be >= 2");
  if (!(inbound_length > 0) || !(branch_length > 0)) fail("lane lengths must be > 0");
  if (!(turn_radius > 0)) fail("turn_radius must be > 0");
  if (!(min_gap_to_junction >= 0) || !(max_gap_to_junction >= min_gap_to_junction)) {
    fail("junction gap range invalid");
  }
  const double observed_span = max_speed * dt * (t_obs - 1) + max_gap_to_junction;
  if (observed_span > inbound_length) fail("inbound lane too short for the observation span");
}

namespace {

// Outbound branch leaving the junction at the local origin along +x.
struct BranchShape {
  double turn = 0.0;    // heading change, rad (positive = left)
  double radius = 0.0;  // turning radius, m (ignored when turn == 0)

  // Point at arc length s from the junction; s < 0 lies on the inbound lane.
  Eigen::Vector2d point_at(double s) const {
    if (s <= 0.0 || turn == 0.0) return {s, 0.0};
    const double arc = radius * std::abs(turn);
    const double side = turn > 0 ? 1.0 : -1.0;
    const double phi = std::min(s, arc) / radius;
    Eigen::Vector2d p(radius * std::sin(phi), side * radius * (1.0 - std::cos(phi)));
    if (s > arc) p += (s - arc) * Eigen::Vector2d(std::cos(turn), std::sin(turn));
    return p;
  }
};

std::vector<BranchShape> make_branches(int count, double radius, std::mt19937_64& rng) {
  const double quarter = std::numbers::pi / 2.0;
  const BranchShape straight{0.0, radius};
  const BranchShape left{quarter, radius};
  const BranchShape right{-quarter, radius};
  switch (count) {
    case 2: {
      std::bernoulli_distribution coin(0.5);
      return {straight, coin(rng) ? left : right};
    }
    case 3:
      return {straight, left, right};
    default:
      return {straight, left, right, BranchShape{std::numbers::pi / 4.0, 2.5 * radius}};
  }
}

std::vector<double> arc_samples(double from, double to, double spacing) {
  const int steps = std::max(1, static_cast<int>(std::ceil((to - from) / spacing - 1e-9)));
  std::vector<double> s;
  for (int i = 0; i <= steps; ++i) s.push_back(from + (to - from) * i / steps);
  return s;
}

}  // namespace

Sample generate_synthetic_scene(std::uint64_t seed, const GenConfig& config) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto jitter = [&]() {
    return config.noise_sigma > 0
               ? Eigen::Vector2d(config.noise_sigma * noise(rng), config.noise_sigma * noise(rng))
               : Eigen::Vector2d::Zero();
  };

  // Local junction frame -> world.
  const double world_heading = uniform(-std::numbers::pi, std::numbers::pi);
  const Eigen::Vector2d world_offset(uniform(-100.0, 100.0), uniform(-100.0, 100.0));
  const Eigen::Rotation2Dd world_rot(world_heading);
  auto to_world = [&](const Eigen::Vector2d& local) -> Point3d {
    const Eigen::Vector2d w = world_rot * local + world_offset;
    return {w.x(), w.y(), 0.0};
  };

  const std::vector<BranchShape> branches = make_branches(config.branches, config.turn_radius, rng);

  Sample sample;
  int next_id = 0;

  auto add_lane = [&](const std::vector<Eigen::Vector2d>& centerline, const std::string& label) {
    const std::size_t step = static_cast<std::size_t>(config.lane_segment_vertices - 1);
    for (std::size_t start = 0; start + 1 < centerline.size(); start += step) {
      Instance lane;
      lane.id = next_id++;
      lane.kind = InstanceKind::kLane;
      lane.label = label;
      const std::size_t stop = std::min(centerline.size(), start + step + 1);
      for (std::size_t k = start; k < stop; ++k) lane.polyline.push_back(to_world(centerline[k]));
      sample.instances.push_back(std::move(lane));
    }
  };

  // Target first so that its id is stable.
  const int target_id = next_id++;
  const int target_branch =
      config.straight_only ? 0 : std::uniform_int_distribution<int>(0, config.branches - 1)(rng);
  const double speed = uniform(config.min_speed, config.max_speed);
  const double last_obs_s = -uniform(config.min_gap_to_junction, config.max_gap_to_junction);
  const double step = speed * config.dt;
  const double first_obs_s = last_obs_s - step * (config.t_obs - 1);

  Instance target;
  target.id = target_id;
  target.kind = InstanceKind::kAgent;
  target.label = std::string(kTargetLabel);
  for (int t = 0; t < config.t_obs; ++t) {
    const Eigen::Vector2d p = branches[target_branch].point_at(first_obs_s + step * t) + jitter();
    target.polyline.push_back(to_world(p));
  }
  for (int t = 0; t < config.t_pred; ++t) {
    const Eigen::Vector2d p =
        branches[target_branch].point_at(last_obs_s + step * (t + 1)) + jitter();
    sample.future_bev.push_back(to_world(p).head<2>());
  }
  sample.instances.push_back(std::move(target));

  // Lanes.
  {
    std::vector<Eigen::Vector2d> inbound;
    for (double s : arc_samples(-config.inbound_length, 0.0, config.lane_vertex_spacing)) {
      inbound.emplace_back(s, 0.0);
    }
    add_lane(inbound, std::string(kInboundLaneLabel));
  }
  for (std::size_t b = 0; b < branches.size(); ++b) {
    std::vector<Eigen::Vector2d> centerline;
    for (double s : arc_samples(0.0, config.branch_length, config.lane_vertex_spacing)) {
      centerline.push_back(branches[b].point_at(s));
    }
    add_lane(centerline, std::string(kBranchLanePrefix) + std::to_string(b));
  }
  const double oncoming_y = 2.0 * config.lane_half_width;
  {
    std::vector<Eigen::Vector2d> oncoming;
    for (double s : arc_samples(-config.branch_length, config.inbound_length,
                                config.lane_vertex_spacing)) {
      oncoming.emplace_back(-s, oncoming_y);
    }
    add_lane(oncoming, std::string(kOncomingLaneLabel));
  }

  // Neighbors ride the branches ahead of the junction or the oncoming lane.
  const int neighbors = std::uniform_int_distribution<int>(0, config.max_neighbors)(rng);
  for (int n = 0; n < neighbors; ++n) {
    const int lane_choice = std::uniform_int_distribution<int>(0, config.branches)(rng);
    const double nb_speed = uniform(config.min_speed, config.max_speed);
    const double nb_step = nb_speed * config.dt;
    const double span = nb_step * (config.t_obs - 1);
    Instance agent;
    agent.id = next_id++;
    agent.kind = InstanceKind::kAgent;
    agent.label = std::string(kOtherAgentLabel);
    if (lane_choice < config.branches) {
      const double start = uniform(2.0, std::max(2.5, config.branch_length - span));
      for (int t = 0; t < config.t_obs; ++t) {
        agent.polyline.push_back(
            to_world(branches[lane_choice].point_at(start + nb_step * t) + jitter()));
      }
    } else {
      const double start = uniform(-config.branch_length, config.inbound_length - span);
      for (int t = 0; t < config.t_obs; ++t) {
        agent.polyline.push_back(
            to_world(Eigen::Vector2d(-(start + nb_step * t), oncoming_y) + jitter()));
      }
    }
    sample.instances.push_back(std::move(agent));
  }

  sample.target_id = target_id;
  const Point3d origin = sample.target().polyline.front();
  sample.frame.origin = Point3d(origin.x(), origin.y(), 0.0);
  sample.frame.heading = wrap_angle(world_heading);
  sample.camera = make_front_camera(sample.frame);
  return sample;
}

namespace {

std::vector<std::vector<Point2d>> branch_centerlines(const Sample& s) {
  std::vector<std::vector<Point2d>> lines;
  for (const Instance& inst : s.instances) {
    if (inst.kind != InstanceKind::kLane) continue;
    const auto branch = branch_of_label(inst.label);
    if (!branch) continue;
    if (static_cast<std::size_t>(*branch) >= lines.size()) lines.resize(*branch + 1);
    auto& line = lines[*branch];
    for (const Point3d& p : inst.polyline) {
      const Point2d q = p.head<2>();
      if (line.empty() || (line.back() - q).norm() > 1e-9) line.push_back(q);
    }
  }
  return lines;
}

double point_segment_distance(const Point2d& p, const Point2d& a, const Point2d& b) {
  const Point2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

}  // namespace

int chosen_branch(const Sample& s) {
  const auto lines = branch_centerlines(s);
  const Point2d end = s.future_bev.back();
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < lines.size(); ++b) {
    for (std::size_t k = 0; k + 1 < lines[b].size(); ++k) {
      const double d = point_segment_distance(end, lines[b][k], lines[b][k + 1]);
      if (d < best_dist) {
        best_dist = d;
        best = static_cast<int>(b);
      }
    }
  }
  return best;
}

std::vector<Point2d> branch_endpoints(const Sample& s) {
  const auto lines = branch_centerlines(s);
  const Point2d anchor = s.last_observed();
  const double radius = (s.future_bev.back() - anchor).norm();
  std::vector<Point2d> out;
  for (const auto& line : lines) {
    Point2d hit = line.empty() ? anchor : line.back();
    for (std::size_t k = 0; k + 1 < line.size(); ++k) {
      const Point2d a = line[k] - anchor;
      const Point2d d = line[k + 1] - line[k];
      // |a + t d| = radius, first crossing with t in [0, 1].
      const double qa = d.squaredNorm();
      const double qb = 2.0 * a.dot(d);
      const double qc = a.squaredNorm() - radius * radius;
      const double disc = qb * qb - 4.0 * qa * qc;
      if (qa <= 0 || disc < 0) continue;
      const double t = (-qb + std::sqrt(disc)) / (2.0 * qa);
      if (t >= 0.0 && t <= 1.0 && qc <= 0.0) {
        hit = line[k] + t * d;
        break;
      }
    }
    out.push_back(hit);
  }
  return out;
}

std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::vector<Sample> generate_dataset(std::size_t count, std::uint64_t seed, const GenConfig& config) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_synthetic_scene(scene_seed(seed, i), config));
  return out;
}

std::vector<Sample> filter_unqualified(const std::vector<Sample>& samples,
                                       double min_visible_future_fraction) {
  if (!(min_visible_future_fraction >= 0.0 && min_visible_future_fraction <= 1.0)) {
    throw std::invalid_argument("min_visible_future_fraction must be in [0, 1]");
  }
  std::vector<Sample> kept;
  for (const Sample& s : samples) {
    const auto fpv = s.future_fpv();
    const auto visible = std::count_if(fpv.begin(), fpv.end(), [](const auto& p) { return p.has_value(); });
    if (static_cast<double>(visible) >=
        min_visible_future_fraction * static_cast<double>(fpv.size())) {
      kept.push_back(s);
    }
  }
  return kept;
}

// ---------------------------------------------------------------------------
// JSON Lines.

DatasetError::DatasetError(std::size_t line, const std::string& field, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": field '" + field + "': " + what),
      line_(line),
      field_(field) {}

namespace {

// Floats are written as decimal strings in shortest round-trip form; plain
// JSON numbers are accepted on input as well.
class Reader {
 public:
  explicit Reader(std::size_t line) : line_(line) {}

  const json& at(const json& obj, const std::string& key, const std::string& path) const {
    if (!obj.is_object()) fail(path, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) fail(path.empty() ? key : path + "." + key, "missing");
    return *it;
  }

  double number(const json& v, const std::string& path) const {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const std::string& text = v.get_ref<const std::string&>();
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec == std::errc() && ptr == text.data() + text.size()) return value;
    }
    fail(path, "expected a number");
  }

  int integer(const json& v, const std::string& path) const {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<int>();
  }

  std::vector<double> numbers(const json& v, const std::string& path, std::size_t count) const {
    if (!v.is_array() || v.size() != count) {
      fail(path, "expected an array of " + std::to_string(count) + " numbers");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < count; ++i) {
      out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

  const json& array(const json& v, const std::string& path) const {
    if (!v.is_array()) fail(path, "expected an array");
    return v;
  }

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw DatasetError(line_, field, what);
  }

 private:
  std::size_t line_;
};

json real(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

json point_json(const Point3d& p) { return json::array({real(p.x()), real(p.y()), real(p.z())}); }

}  // namespace

std::string sample_to_json_line(const Sample& s) {
  json instances = json::array();
  for (const Instance& inst : s.instances) {
    json polyline = json::array();
    for (const Point3d& p : inst.polyline) polyline.push_back(point_json(p));
    instances.push_back({{"id", inst.id},
                         {"kind", inst.kind == InstanceKind::kAgent ? "agent" : "lane"},
                         {"label", inst.label},
                         {"polyline", std::move(polyline)}});
  }
  json future = json::array();
  for (const Point2d& p : s.future_bev) future.push_back(json::array({real(p.x()), real(p.y())}));
  json rotation = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rotation.push_back(real(s.camera.rotation(r, c)));
  }
  const json camera = {{"fx", real(s.camera.focal_x)},
                       {"fy", real(s.camera.focal_y)},
                       {"cx", real(s.camera.principal_x)},
                       {"cy", real(s.camera.principal_y)},
                       {"w", real(s.camera.image_width)},
                       {"h", real(s.camera.image_height)},
                       {"R", std::move(rotation)},
                       {"t", point_json(s.camera.translation)}};
  const json frame = {{"origin", point_json(s.frame.origin)}, {"heading", real(s.frame.heading)}};
  const json line = {{"instances", std::move(instances)},
                     {"target_id", s.target_id},
                     {"future", std::move(future)},
                     {"camera", camera},
                     {"frame", frame}};
  return line.dump();
}

Sample sample_from_json_line(const std::string& text, std::size_t line_number) {
  const Reader rd(line_number);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    rd.fail("<line>", std::string("malformed JSON: ") + e.what());
  }
  Sample s;
  const json& instances = rd.array(rd.at(doc, "instances", ""), "instances");
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const std::string path = "instances[" + std::to_string(i) + "]";
    const json& obj = instances[i];
    Instance inst;
    inst.id = rd.integer(rd.at(obj, "id", path), path + ".id");
    const json& kind = rd.at(obj, "kind", path);
    if (kind == "agent") {
      inst.kind = InstanceKind::kAgent;
    } else if (kind == "lane") {
      inst.kind = InstanceKind::kLane;
    } else {
      rd.fail(path + ".kind", "expected \"agent\" or \"lane\"");
    }
    const json& label = rd.at(obj, "label", path);
    if (!label.is_string()) rd.fail(path + ".label", "expected a string");
    inst.label = label.get<std::string>();
    const json& polyline = rd.array(rd.at(obj, "polyline", path), path + ".polyline");
    for (std::size_t k = 0; k < polyline.size(); ++k) {
      const auto xyz = rd.numbers(polyline[k], path + ".polyline[" + std::to_string(k) + "]", 3);
      inst.polyline.emplace_back(xyz[0], xyz[1], xyz[2]);
    }
    s.instances.push_back(std::move(inst));
  }
  s.target_id = rd.integer(rd.at(doc, "target_id", ""), "target_id");
  const json& future = rd.array(rd.at(doc, "future", ""), "future");
  for (std::size_t k = 0; k < future.size(); ++k) {
    const auto xy = rd.numbers(future[k], "future[" + std::to_string(k) + "]", 2);
    s.future_bev.emplace_back(xy[0], xy[1]);
  }
  const json& cam = rd.at(doc, "camera", "");
  s.camera.focal_x = rd.number(rd.at(cam, "fx", "camera"), "camera.fx");
  s.camera.focal_y = rd.number(rd.at(cam, "fy", "camera"), "camera.fy");
  s.camera.principal_x = rd.number(rd.at(cam, "cx", "camera"), "camera.cx");
  s.camera.principal_y = rd.number(rd.at(cam, "cy", "camera"), "camera.cy");
  s.camera.image_width = rd.number(rd.at(cam, "w", "camera"), "camera.w");
  s.camera.image_height = rd.number(rd.at(cam, "h", "camera"), "camera.h");
  const auto r = rd.numbers(rd.at(cam, "R", "camera"), "camera.R", 9);
  for (int i = 0; i < 9; ++i) s.camera.rotation(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
  const auto t = rd.numbers(rd.at(cam, "t", "camera"), "camera.t", 3);
  s.camera.translation = Point3d(t[0], t[1], t[2]);
  const json& frame = rd.at(doc, "frame", "");
  const auto o = rd.numbers(rd.at(frame, "origin", "frame"), "frame.origin", 3);
  s.frame.origin = Point3d(o[0], o[1], o[2]);
  s.frame.heading = rd.number(rd.at(frame, "heading", "frame"), "frame.heading");
  try {
    s.validate();
  } catch (const std::exception& e) {
    rd.fail("<sample>", e.what());
  }
  return s;
}

void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const Sample& s : samples) out << sample_to_json_line(s) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<Sample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    samples.push_back(sample_from_json_line(line, line_number));
  }
  return samples;
}

}  // namespace xvtp
