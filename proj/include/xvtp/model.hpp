#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "xvtp/config.hpp"
#include "xvtp/encoder.hpp"
#include "xvtp/goal_predictor.hpp"
#include "xvtp/scene.hpp"
#include "xvtp/trajectory_generator.hpp"

namespace xvtp {

using nn::Matrix;

// Everything about a sample that does not depend on parameters.
struct PreparedSample {
  VectorizedView bev;
  VectorizedView fpv;
  Camera camera;
  Frame frame;
  goals::GoalCandidateSet candidates;
  goals::QueryInputs queries;
  int target_index = 0;
  std::vector<int> sparse_owner;  // instance index per sparse candidate
  int sparse_positive = 0;        // sparse candidate nearest the true endpoint
  Point2d gt_endpoint;            // world, m
  // Teacher-forcing goals and targets in network units.
  Matrix goal_bev;  // 1 x 2
  Matrix goal_fpv;  // 1 x 2 (zero when invisible)
  bool goal_fpv_visible = false;
  Matrix gt_bev;  // T x 2, absolute frame / bev_scale
  Matrix gt_fpv;  // T x 2, pixels / image size
  std::vector<bool> gt_fpv_visible;
};

PreparedSample prepare_sample(const Sample& s, const ModelConfig& cfg);

// Per-view loss terms. Under shared queries l2_bev and l2_fpv are the same
// node.
struct LossTerms {
  nn::Var l1_bev, l1_fpv;
  nn::Var l2_bev, l2_fpv;
  nn::Var l3_bev, l3_fpv;
  nn::Var total;
};

struct Prediction {
  std::vector<int> goals_bev;  // candidate indices
  std::vector<int> goals_fpv;
  std::vector<Point3d> goal_points_bev;
  std::vector<Point3d> goal_points_fpv;
  std::vector<Matrix> bev;                   // T x 2, world m
  std::vector<std::optional<Matrix>> fpv;    // T x 2 px; nullopt when the goal is invisible
  Eigen::VectorXd heatmap;                   // shared (or BEV) scores over the candidates
  std::optional<Eigen::VectorXd> heatmap_fpv;  // per-view FPV scores without shared queries
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  // Teacher-forced losses; `rng` drives the random mask when training.
  LossTerms losses(nn::Tape& tape, const PreparedSample& p, const TrainConfig& weights,
                   std::mt19937_64& rng, bool training);

  // Inference with the random mask off.
  Prediction predict(const PreparedSample& p, const Sample& s);

 private:
  ModelConfig cfg_;
  ModelWiring wiring_;
  nn::ParameterStore params_;
};

}  // namespace xvtp
