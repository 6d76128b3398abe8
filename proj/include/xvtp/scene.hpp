#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xvtp/geometry.hpp"

namespace xvtp {

enum class InstanceKind { kAgent, kLane };

// Agents carry exactly T_obs observed positions; lanes are centerline
// pieces. Labels are shared verbatim by both views.
struct Instance {
  int id = 0;
  InstanceKind kind = InstanceKind::kLane;
  std::vector<Point3d> polyline;
  std::string label;

  bool operator==(const Instance&) const = default;
};

// Label conventions used by the generator and by branch bookkeeping.
inline constexpr std::string_view kTargetLabel = "agent:target";
inline constexpr std::string_view kOtherAgentLabel = "agent:other";
inline constexpr std::string_view kInboundLaneLabel = "lane:inbound";
inline constexpr std::string_view kOncomingLaneLabel = "lane:oncoming";
inline constexpr std::string_view kBranchLanePrefix = "lane:branch:";

// Returns the branch number encoded in a lane label, if any.
std::optional<int> branch_of_label(std::string_view label);

struct Sample {
  std::vector<Instance> instances;
  int target_id = 0;
  std::vector<Point2d> future_bev;  // world ground plane, m
  Camera camera;
  Frame frame;

  const Instance& target() const;
  int instance_index(int id) const;
  int t_obs() const { return static_cast<int>(target().polyline.size()); }
  int t_pred() const { return static_cast<int>(future_bev.size()); }
  Point2d last_observed() const { return target().polyline.back().head<2>(); }

  // Projection of future_bev lifted to z = 0; std::nullopt marks Invisible.
  std::vector<std::optional<Point2d>> future_fpv() const;

  // Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  bool operator==(const Sample& other) const;
};

// ---------------------------------------------------------------------------
// Vectorized views.

inline constexpr int kFeatureWidth = 10;

// Column layout of one vector feature row.
namespace feature {
inline constexpr int kStartX = 0;
inline constexpr int kStartY = 1;
inline constexpr int kEndX = 2;
inline constexpr int kEndY = 3;
inline constexpr int kIsTarget = 4;
inline constexpr int kIsOtherAgent = 5;
inline constexpr int kIsLane = 6;
inline constexpr int kTime = 7;
inline constexpr int kValid = 8;
inline constexpr int kPad = 9;
}  // namespace feature

struct VectorizedView {
  ViewId view = ViewId::kBev;
  int max_vectors = 0;
  // Row block [j * max_vectors, (j + 1) * max_vectors) belongs to instance j.
  Eigen::MatrixXd features;
  std::vector<bool> instance_visible;
  std::vector<int> instance_ids;
  std::vector<std::string> instance_labels;

  int num_instances() const { return static_cast<int>(instance_ids.size()); }
  auto instance_block(int j) const {
    return features.middleRows(static_cast<Eigen::Index>(j) * max_vectors, max_vectors);
  }
  int valid_count(int j) const;
};

VectorizedView vectorize_bev(const Sample& s);
VectorizedView vectorize_fpv(const Sample& s);

// ---------------------------------------------------------------------------
// Synthetic intersection scenes.

struct GenConfig {
  int branches = 2;
  int t_obs = 8;
  int t_pred = 12;
  double dt = 0.2;             // s
  double noise_sigma = 0.2;    // m
  double lane_half_width = 1.75;
  int max_neighbors = 4;
  double min_speed = 6.0;      // m/s
  double max_speed = 8.0;      // m/s
  double lane_vertex_spacing = 3.0;   // m
  int lane_segment_vertices = 6;      // max vertices per lane instance
  double inbound_length = 30.0;
  double branch_length = 30.0;
  double turn_radius = 12.0;
  // Distance of the last observed position before the junction.
  double min_gap_to_junction = 1.0;
  double max_gap_to_junction = 5.0;
  bool straight_only = false;  // target always takes the straight branch

  void validate() const;
};

Sample generate_synthetic_scene(std::uint64_t seed, const GenConfig& config);

// Scene i of a dataset uses its own stream derived from (seed, i).
std::uint64_t scene_seed(std::uint64_t seed, std::size_t index);
std::vector<Sample> generate_dataset(std::size_t count, std::uint64_t seed, const GenConfig& config);

// Index of the branch whose lane passes closest to the ground-truth endpoint.
int chosen_branch(const Sample& s);

// For every branch, the point on that branch's centerline at the same
// Euclidean distance from the last observed position as the true endpoint.
std::vector<Point2d> branch_endpoints(const Sample& s);

std::vector<Sample> filter_unqualified(const std::vector<Sample>& samples,
                                       double min_visible_future_fraction);

// ---------------------------------------------------------------------------
// JSON Lines dataset files.

class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::size_t line, const std::string& field, const std::string& what);
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

std::string sample_to_json_line(const Sample& s);
Sample sample_from_json_line(const std::string& line, std::size_t line_number = 1);

void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& path);
std::vector<Sample> load_dataset(const std::filesystem::path& path);

}  // namespace xvtp
