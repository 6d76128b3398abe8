#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "xvtp/config.hpp"
#include "xvtp/encoder.hpp"
#include "xvtp/geometry.hpp"
#include "xvtp/scene.hpp"

namespace xvtp::goals {

using nn::Matrix;
using nn::ParameterStore;
using nn::Tape;
using nn::Var;

enum class Provenance { kSparse, kDense };

// Shared 3D goal queries. Sparse points come first.
struct GoalCandidateSet {
  std::vector<Point3d> points;  // world frame, z = 0
  std::vector<Provenance> provenance;
  std::vector<int> owner_lane;  // lane instance id for sparse points, -1 for dense

  int size() const { return static_cast<int>(points.size()); }
  int sparse_count() const;
};

class NoCandidatesError : public std::runtime_error {
 public:
  NoCandidatesError() : std::runtime_error("no candidates") {}
};

GoalCandidateSet sample_candidates(const Sample& s, const CandidateConfig& config);

// Per-view keep flags (true = kept).
struct MaskMatrix {
  std::vector<bool> bev;
  std::vector<bool> fpv;
};

MaskMatrix build_mask(const std::vector<Point3d>& queries, const Camera& cam, std::mt19937_64& rng,
                      double beta, bool training);

// Query coordinates as seen by each view, in network units.
struct QueryInputs {
  Matrix bev;                     // n x 2, absolute frame / bev_scale
  Matrix fpv;                     // n x 2, pixels / image size (zero when invisible)
  std::vector<bool> fpv_visible;  // projection exists
};

QueryInputs query_inputs(const std::vector<Point3d>& queries, const Camera& cam, const Frame& frame,
                         double bev_scale);

void add_goal_params(ParameterStore& store, const ModelConfig& cfg);

// Per-view transformer refinement before fusion (rows not yet masked).
struct ViewQueries {
  Var bev;
  Var fpv;
};

ViewQueries refine_view_queries(Tape& tape, const QueryInputs& queries,
                                const encoder::StateFeatures& bev,
                                const encoder::StateFeatures& fpv, ParameterStore& store,
                                const ModelConfig& cfg, const Var* previous = nullptr);

// Masked fusion of the two views' query features into Omega (n x embedding).
Var fuse(const ViewQueries& views, const MaskMatrix& mask);

// Full refinement: `refinement_rounds` rounds of per-view transformers and
// masked fusion.
Var refine_queries(Tape& tape, const QueryInputs& queries, const encoder::StateFeatures& bev,
                   const encoder::StateFeatures& fpv, const MaskMatrix& mask,
                   ParameterStore& store, const ModelConfig& cfg);

// Single-view wiring: each view keeps its own masked features
// (omega_m = omega'_m * lambda_m), and later rounds feed each view its own
// previous output.
ViewQueries refine_per_view(Tape& tape, const QueryInputs& queries,
                            const encoder::StateFeatures& bev, const encoder::StateFeatures& fpv,
                            const MaskMatrix& mask, ParameterStore& store, const ModelConfig& cfg);

// softmax(MLP(omega)) over all candidates, as a 1 x n row. Entries with
// admissible == false (if given) get probability 0.
Var score_heatmap(Tape& tape, const Var& omega, ParameterStore& store, const std::string& prefix,
                  const std::vector<bool>* admissible = nullptr);

// Index of the candidate nearest to `endpoint` on the ground plane; ties go
// to the lowest index.
int nearest_candidate(const std::vector<Point3d>& points, const Point2d& endpoint);

Var goal_loss(const Var& heatmap, const Point2d& gt_endpoint, const std::vector<Point3d>& points);

struct GoalSet {
  std::vector<int> indices;
  std::vector<Point3d> points;
};

// Coverage objective sum_q score(q) * [dist(q, G) <= radius].
double coverage(const Eigen::VectorXd& scores, const std::vector<Point3d>& points,
                const std::vector<int>& selected, double radius);

struct HillClimbTrace {
  std::vector<double> objective;  // after seeding and after each improving swap
  int passes = 0;
};

GoalSet hill_climb_sample(const Eigen::VectorXd& scores, const std::vector<Point3d>& points, int k,
                          double radius, int max_passes = 100, HillClimbTrace* trace = nullptr);

struct ViewGoals {
  std::vector<int> indices_bev;
  std::vector<int> indices_fpv;
  std::vector<Point2d> bev;                 // world ground plane, m
  std::vector<std::optional<Point2d>> fpv;  // pixels
};

ViewGoals select_goals_per_view(const GoalSet& goals, const Camera& cam);

}  // namespace xvtp::goals
