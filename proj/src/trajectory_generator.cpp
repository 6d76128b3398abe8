#include "xvtp/trajectory_generator.hpp"

#include <iostream>
#include <stdexcept>

namespace xvtp::trajectory {

void add_trajectory_params(ParameterStore& store, const std::string& prefix, const ModelConfig& cfg) {
  const int e = cfg.block.embedding_size;
  const int h = cfg.block.hidden_size;
  nn::add_mlp(store, prefix + "/goal_embed", 2, h, e);
  nn::add_mlp(store, prefix + "/decoder", 2 * e, h, 2 * cfg.t_pred);
}

Var complete_trajectory(Tape& tape, const Var& target_state, const Matrix& goals,
                        const std::vector<bool>& goal_visible, ParameterStore& store,
                        const std::string& prefix, int t_pred) {
  const Eigen::Index k = goals.rows();
  if (target_state.rows() != 1) {
    throw std::invalid_argument("complete_trajectory: target state must be one row, got " +
                                nn::shape_string(target_state.rows(), target_state.cols()));
  }
  if (goals.cols() != 2 || static_cast<Eigen::Index>(goal_visible.size()) != k || k == 0) {
    throw std::invalid_argument("complete_trajectory: expected k x 2 goals with k visibility flags");
  }
  Var embedded = nn::mlp_forward(tape, tape.constant(goals), store, prefix + "/goal_embed");
  Eigen::VectorXd keep(k);
  for (Eigen::Index g = 0; g < k; ++g) keep(g) = goal_visible[static_cast<std::size_t>(g)] ? 1.0 : 0.0;
  if (keep.minCoeff() < 1.0) embedded = nn::scale_rows(embedded, keep);
  const Var state = nn::gather_rows(target_state, std::vector<int>(static_cast<std::size_t>(k), 0));
  const Var out = nn::mlp_forward(tape, nn::concat_cols({state, embedded}), store, prefix + "/decoder");
  if (out.cols() != 2 * t_pred) {
    throw std::invalid_argument("complete_trajectory: decoder emits " + std::to_string(out.cols()) +
                                " values, expected " + std::to_string(2 * t_pred));
  }
  return out;
}

Matrix trajectory_row(const Matrix& flat, Eigen::Index g) {
  const Eigen::Index t = flat.cols() / 2;
  Matrix out(t, 2);
  for (Eigen::Index s = 0; s < t; ++s) {
    out(s, 0) = flat(g, 2 * s);
    out(s, 1) = flat(g, 2 * s + 1);
  }
  return out;
}

Var regression_loss(Tape& tape, const Var& pred, const Matrix& gt,
                    const std::vector<bool>& evaluable, double unit_scale) {
  const Eigen::Index t = gt.rows();
  if (pred.rows() != 1 || pred.cols() != 2 * t || gt.cols() != 2 ||
      static_cast<Eigen::Index>(evaluable.size()) != t) {
    throw std::invalid_argument("regression_loss: prediction " +
                                nn::shape_string(pred.rows(), pred.cols()) +
                                " does not match ground truth " + nn::shape_string(gt.rows(), gt.cols()));
  }
  std::vector<int> steps;
  for (Eigen::Index s = 0; s < t; ++s) {
    if (evaluable[static_cast<std::size_t>(s)]) steps.push_back(static_cast<int>(s));
  }
  if (steps.empty()) {
    std::cerr << "warning: regression_loss has no evaluable steps\n";
    return tape.constant(Matrix::Zero(1, 1));
  }
  const Matrix gt_flat = Eigen::Map<const Eigen::Matrix<double, 1, Eigen::Dynamic>>(
      Matrix(gt.transpose()).data(), 2 * t);
  const Var diff = nn::reshape(pred - tape.constant(gt_flat), t, 2);
  const Var dist = nn::row_norms(nn::gather_rows(diff, steps));
  return unit_scale * nn::sum(dist);
}

}  // namespace xvtp::trajectory
