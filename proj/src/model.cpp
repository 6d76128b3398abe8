#include "xvtp/model.hpp"

#include <limits>
#include <stdexcept>

#include "xvtp/training.hpp"

namespace xvtp {

namespace {

int index_of_id(const VectorizedView& view, int id) {
  for (int j = 0; j < view.num_instances(); ++j) {
    if (view.instance_ids[static_cast<std::size_t>(j)] == id) return j;
  }
  throw std::invalid_argument("instance id " + std::to_string(id) + " missing from the view");
}

Matrix bev_units(const Point2d& world, const Frame& frame, double bev_scale) {
  const Point3d abs = to_absolute_frame(Point3d(world.x(), world.y(), 0.0), frame);
  return (project_to_bev(abs) / bev_scale).transpose();
}

// Nearest admissible candidate, or -1 when none is admissible.
int nearest_admissible(const std::vector<Point3d>& points, const Point2d& endpoint,
                       const std::vector<bool>& admissible) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!admissible[i]) continue;
    const double d = (points[i].head<2>() - endpoint).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

nn::Var one_hot_loss(nn::Tape& tape, const nn::Var& heatmap, int index) {
  if (index < 0) return tape.constant(Matrix::Zero(1, 1));
  Matrix target = Matrix::Zero(1, heatmap.cols());
  target(0, index) = 1.0;
  return nn::cross_entropy(heatmap, target);
}

Eigen::VectorXd row_scores(const nn::Var& heatmap) { return heatmap.value().row(0).transpose(); }

}  // namespace

PreparedSample prepare_sample(const Sample& s, const ModelConfig& cfg) {
  if (s.t_pred() != cfg.t_pred) {
    throw std::invalid_argument("sample has " + std::to_string(s.t_pred()) +
                                " future steps, model expects " + std::to_string(cfg.t_pred));
  }
  PreparedSample p;
  p.bev = vectorize_bev(s);
  p.fpv = vectorize_fpv(s);
  p.camera = s.camera;
  p.frame = s.frame;
  p.candidates = goals::sample_candidates(s, cfg.candidates);
  p.queries = goals::query_inputs(p.candidates.points, s.camera, s.frame, cfg.bev_scale);
  p.target_index = index_of_id(p.bev, s.target_id);

  const int sparse = p.candidates.sparse_count();
  for (int i = 0; i < sparse; ++i) {
    p.sparse_owner.push_back(index_of_id(p.bev, p.candidates.owner_lane[static_cast<std::size_t>(i)]));
  }
  p.gt_endpoint = s.future_bev.back();
  const std::vector<Point3d> sparse_points(p.candidates.points.begin(),
                                           p.candidates.points.begin() + sparse);
  p.sparse_positive = goals::nearest_candidate(sparse_points, p.gt_endpoint);

  p.goal_bev = bev_units(p.gt_endpoint, s.frame, cfg.bev_scale);
  p.goal_fpv = Matrix::Zero(1, 2);
  const Point3d end3(p.gt_endpoint.x(), p.gt_endpoint.y(), 0.0);
  if (const auto uv = project_to_fpv(end3, s.camera)) {
    p.goal_fpv << uv->x() / s.camera.image_width, uv->y() / s.camera.image_height;
    p.goal_fpv_visible = true;
  }

  const int t = s.t_pred();
  p.gt_bev = Matrix::Zero(t, 2);
  p.gt_fpv = Matrix::Zero(t, 2);
  const auto fpv = s.future_fpv();
  for (int k = 0; k < t; ++k) {
    p.gt_bev.row(k) = bev_units(s.future_bev[static_cast<std::size_t>(k)], s.frame, cfg.bev_scale);
    const auto& uv = fpv[static_cast<std::size_t>(k)];
    p.gt_fpv_visible.push_back(uv.has_value());
    if (uv) p.gt_fpv.row(k) << uv->x() / s.camera.image_width, uv->y() / s.camera.image_height;
  }
  return p;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), wiring_(ablation_modes(cfg)), params_(seed) {
  cfg_.validate();
  encoder::add_encoder_params(params_, "bev/encoder", cfg_);
  encoder::add_encoder_params(params_, "fpv/encoder", cfg_);
  goals::add_goal_params(params_, cfg_);
  trajectory::add_trajectory_params(params_, "bev/traj", cfg_);
  trajectory::add_trajectory_params(params_, "fpv/traj", cfg_);
}

LossTerms Model::losses(nn::Tape& tape, const PreparedSample& p, const TrainConfig& weights,
                        std::mt19937_64& rng, bool training) {
  const auto sub_bev = encoder::subgraph_forward(tape, p.bev, params_, "bev/encoder", cfg_);
  const auto sub_fpv = encoder::subgraph_forward(tape, p.fpv, params_, "fpv/encoder", cfg_);
  const auto g = encoder::global_graph_forward(tape, sub_bev, sub_fpv, params_, cfg_,
                                               wiring_.graph_mode, cfg_.epsilon);

  LossTerms t;
  t.l1_bev = encoder::sparse_goal_loss(tape, g.bev, p.sparse_owner, p.sparse_positive, params_,
                                       "bev/encoder");
  t.l1_fpv = encoder::sparse_goal_loss(tape, g.fpv, p.sparse_owner, p.sparse_positive, params_,
                                       "fpv/encoder");

  const auto& points = p.candidates.points;
  const goals::MaskMatrix mask = goals::build_mask(points, p.camera, rng, wiring_.beta, training);
  if (wiring_.shared_queries) {
    const nn::Var omega = goals::refine_queries(tape, p.queries, g.bev, g.fpv, mask, params_, cfg_);
    const nn::Var heat = goals::score_heatmap(tape, omega, params_, "goal/scorer");
    t.l2_bev = goals::goal_loss(heat, p.gt_endpoint, points);
    t.l2_fpv = t.l2_bev;
  } else {
    const auto views = goals::refine_per_view(tape, p.queries, g.bev, g.fpv, mask, params_, cfg_);
    const nn::Var heat_bev = goals::score_heatmap(tape, views.bev, params_, "goal/bev/scorer", &mask.bev);
    const nn::Var heat_fpv = goals::score_heatmap(tape, views.fpv, params_, "goal/fpv/scorer", &mask.fpv);
    t.l2_bev = one_hot_loss(tape, heat_bev, nearest_admissible(points, p.gt_endpoint, mask.bev));
    t.l2_fpv = one_hot_loss(tape, heat_fpv, nearest_admissible(points, p.gt_endpoint, mask.fpv));
  }

  const int steps = cfg_.t_pred;
  const nn::Var state_bev = nn::gather_rows(g.bev.features, {p.target_index});
  const nn::Var state_fpv = nn::gather_rows(g.fpv.features, {p.target_index});
  const nn::Var traj_bev =
      trajectory::complete_trajectory(tape, state_bev, p.goal_bev, {true}, params_, "bev/traj", steps);
  const nn::Var traj_fpv = trajectory::complete_trajectory(tape, state_fpv, p.goal_fpv,
                                                           {p.goal_fpv_visible}, params_, "fpv/traj", steps);
  t.l3_bev = trajectory::regression_loss(tape, traj_bev, p.gt_bev,
                                         std::vector<bool>(static_cast<std::size_t>(steps), true),
                                         cfg_.bev_scale);
  t.l3_fpv = trajectory::regression_loss(tape, traj_fpv, p.gt_fpv, p.gt_fpv_visible, 1.0);

  t.total = total_loss(ViewLosses<nn::Var>{t.l1_bev, t.l2_bev, t.l3_bev},
                       ViewLosses<nn::Var>{t.l1_fpv, t.l2_fpv, t.l3_fpv}, weights);
  return t;
}

Prediction Model::predict(const PreparedSample& p, const Sample& s) {
  nn::Tape tape(false);
  const auto sub_bev = encoder::subgraph_forward(tape, p.bev, params_, "bev/encoder", cfg_);
  const auto sub_fpv = encoder::subgraph_forward(tape, p.fpv, params_, "fpv/encoder", cfg_);
  const auto g = encoder::global_graph_forward(tape, sub_bev, sub_fpv, params_, cfg_,
                                               wiring_.graph_mode, cfg_.epsilon);
  const auto& points = p.candidates.points;
  std::mt19937_64 unused(0);
  const goals::MaskMatrix mask = goals::build_mask(points, p.camera, unused, 0.0, false);
  const auto& sc = cfg_.sampler;

  Prediction out;
  goals::GoalSet set_bev;
  goals::GoalSet set_fpv;
  if (wiring_.shared_queries) {
    const nn::Var omega = goals::refine_queries(tape, p.queries, g.bev, g.fpv, mask, params_, cfg_);
    out.heatmap = row_scores(goals::score_heatmap(tape, omega, params_, "goal/scorer"));
    set_bev = goals::hill_climb_sample(out.heatmap, points, sc.k, sc.radius, sc.max_passes);
    set_fpv = set_bev;
  } else {
    const auto views = goals::refine_per_view(tape, p.queries, g.bev, g.fpv, mask, params_, cfg_);
    out.heatmap = row_scores(goals::score_heatmap(tape, views.bev, params_, "goal/bev/scorer", &mask.bev));
    out.heatmap_fpv =
        row_scores(goals::score_heatmap(tape, views.fpv, params_, "goal/fpv/scorer", &mask.fpv));
    set_bev = goals::hill_climb_sample(out.heatmap, points, sc.k, sc.radius, sc.max_passes);
    set_fpv = goals::hill_climb_sample(*out.heatmap_fpv, points, sc.k, sc.radius, sc.max_passes);
  }
  out.goals_bev = set_bev.indices;
  out.goals_fpv = set_fpv.indices;
  out.goal_points_bev = set_bev.points;
  out.goal_points_fpv = set_fpv.points;

  const int steps = cfg_.t_pred;
  const auto kb = static_cast<Eigen::Index>(set_bev.points.size());
  Matrix goal_bev(kb, 2);
  for (Eigen::Index i = 0; i < kb; ++i) {
    goal_bev.row(i) = bev_units(set_bev.points[static_cast<std::size_t>(i)].head<2>(), s.frame, cfg_.bev_scale);
  }
  const nn::Var state_bev = nn::gather_rows(g.bev.features, {p.target_index});
  const Matrix flat_bev = trajectory::complete_trajectory(
      tape, state_bev, goal_bev, std::vector<bool>(static_cast<std::size_t>(kb), true), params_,
      "bev/traj", steps).value();
  for (Eigen::Index i = 0; i < kb; ++i) {
    Matrix traj = trajectory::trajectory_row(flat_bev, i) * cfg_.bev_scale;
    for (Eigen::Index k = 0; k < traj.rows(); ++k) {
      const Point3d w = from_absolute_frame(Point3d(traj(k, 0), traj(k, 1), 0.0), s.frame);
      traj.row(k) << w.x(), w.y();
    }
    out.bev.push_back(std::move(traj));
  }

  const auto kf = static_cast<Eigen::Index>(set_fpv.points.size());
  Matrix goal_fpv = Matrix::Zero(kf, 2);
  std::vector<bool> visible(static_cast<std::size_t>(kf), false);
  for (Eigen::Index i = 0; i < kf; ++i) {
    if (const auto uv = project_to_fpv(set_fpv.points[static_cast<std::size_t>(i)], s.camera)) {
      goal_fpv.row(i) << uv->x() / s.camera.image_width, uv->y() / s.camera.image_height;
      visible[static_cast<std::size_t>(i)] = true;
    }
  }
  const nn::Var state_fpv = nn::gather_rows(g.fpv.features, {p.target_index});
  const Matrix flat_fpv = trajectory::complete_trajectory(tape, state_fpv, goal_fpv, visible, params_,
                                                          "fpv/traj", steps).value();
  for (Eigen::Index i = 0; i < kf; ++i) {
    if (!visible[static_cast<std::size_t>(i)]) {
      out.fpv.emplace_back(std::nullopt);
      continue;
    }
    Matrix traj = trajectory::trajectory_row(flat_fpv, i);
    traj.col(0) *= s.camera.image_width;
    traj.col(1) *= s.camera.image_height;
    out.fpv.emplace_back(std::move(traj));
  }
  return out;
}

}  // namespace xvtp
