#pragma once

#include <string>
#include <vector>

#include "xvtp/config.hpp"
#include "xvtp/nn/blocks.hpp"

namespace xvtp::trajectory {

using nn::Matrix;
using nn::ParameterStore;
using nn::Tape;
using nn::Var;

// Registers `prefix/goal_embed` (2 -> embedding) and `prefix/decoder`
// (2 * embedding -> 2 * t_pred). Prefixes: "bev/traj", "fpv/traj".
void add_trajectory_params(ParameterStore& store, const std::string& prefix, const ModelConfig& cfg);

// One trajectory per goal row. target_state is 1 x embedding, goals is
// k x 2 in view network units; goals flagged invisible use a zero
// embedding. Row g of the result is [x_1, y_1, ..., x_T, y_T].
Var complete_trajectory(Tape& tape, const Var& target_state, const Matrix& goals,
                        const std::vector<bool>& goal_visible, ParameterStore& store,
                        const std::string& prefix, int t_pred);

// Row g of a complete_trajectory value as a T x 2 matrix.
Matrix trajectory_row(const Matrix& flat, Eigen::Index g);

// unit_scale * sum over evaluable steps of |pred_t - gt_t|. pred is
// 1 x 2T, gt is T x 2, both in the same units. No evaluable step gives a
// constant zero and a warning on stderr.
Var regression_loss(Tape& tape, const Var& pred, const Matrix& gt,
                    const std::vector<bool>& evaluable, double unit_scale = 1.0);

}  // namespace xvtp::trajectory
