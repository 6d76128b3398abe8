#include "xvtp/encoder.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace xvtp::encoder {

std::string subgraph_prefix(const std::string& prefix, int layer) {
  return prefix + "/subgraph/" + std::to_string(layer);
}

std::string global_prefix(const std::string& prefix, int layer) {
  return prefix + "/global/" + std::to_string(layer);
}

void add_encoder_params(ParameterStore& store, const std::string& prefix, const ModelConfig& cfg) {
  const int e = cfg.block.embedding_size;
  const int h = cfg.block.hidden_size;
  for (int l = 0; l < cfg.subgraph_layers; ++l) {
    const int in = l == 0 ? kFeatureWidth : e;
    nn::add_attention(store, subgraph_prefix(prefix, l) + "/attn", in, in, e);
    nn::add_mlp(store, subgraph_prefix(prefix, l) + "/mlp", in + e, h, e);
  }
  for (int l = 0; l < cfg.global_layers; ++l) {
    nn::add_attention(store, global_prefix(prefix, l) + "/attn", e, e, e);
    nn::add_mlp(store, global_prefix(prefix, l) + "/mlp", 2 * e, h, e);
  }
  nn::add_mlp(store, prefix + "/sparse_scorer", e, h, 1);
}

namespace {

// Scatters per-visible-instance rows back to all N instances; missing
// instances get zero rows.
Var scatter_instances(Tape& tape, const Var& rows, const std::vector<int>& row_of_instance,
                      Eigen::Index width) {
  const Var zero = tape.constant(Matrix::Zero(1, width));
  const Var padded = rows.rows() > 0 ? nn::concat_rows({rows, zero}) : zero;
  const int zero_row = static_cast<int>(padded.rows()) - 1;
  std::vector<int> index;
  index.reserve(row_of_instance.size());
  for (int r : row_of_instance) index.push_back(r < 0 ? zero_row : r);
  return nn::gather_rows(padded, index);
}

Eigen::VectorXd visibility_weights(const std::vector<bool>& visible) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(visible.size()));
  for (std::size_t i = 0; i < visible.size(); ++i) w(static_cast<Eigen::Index>(i)) = visible[i] ? 1.0 : 0.0;
  return w;
}

}  // namespace

StateFeatures subgraph_forward(Tape& tape, const VectorizedView& view, ParameterStore& store,
                               const std::string& prefix, const ModelConfig& cfg) {
  const int n = view.num_instances();
  const int e = cfg.block.embedding_size;

  std::vector<int> rows;
  std::vector<std::pair<int, int>> segments;
  std::vector<int> row_of_instance(static_cast<std::size_t>(n), -1);
  for (int j = 0; j < n; ++j) {
    const int start = static_cast<int>(rows.size());
    for (int k = 0; k < view.max_vectors; ++k) {
      const int r = j * view.max_vectors + k;
      if (view.features(r, feature::kValid) > 0.5) rows.push_back(r);
    }
    const int length = static_cast<int>(rows.size()) - start;
    if (length > 0) {
      row_of_instance[static_cast<std::size_t>(j)] = static_cast<int>(segments.size());
      segments.emplace_back(start, length);
    }
  }

  StateFeatures out;
  out.visible.assign(static_cast<std::size_t>(n), false);
  for (int j = 0; j < n; ++j) out.visible[static_cast<std::size_t>(j)] = row_of_instance[static_cast<std::size_t>(j)] >= 0;
  if (segments.empty()) {
    out.features = tape.constant(Matrix::Zero(n, e));
    return out;
  }

  Matrix gathered(static_cast<Eigen::Index>(rows.size()), kFeatureWidth);
  for (std::size_t i = 0; i < rows.size(); ++i) gathered.row(static_cast<Eigen::Index>(i)) = view.features.row(rows[i]);

  const auto total = static_cast<Eigen::Index>(rows.size());
  BoolMatrix same_instance = BoolMatrix::Constant(total, total, false);
  for (const auto& [start, length] : segments) same_instance.block(start, start, length, length).setConstant(true);

  Var x = tape.constant(std::move(gathered));
  for (int l = 0; l < cfg.subgraph_layers; ++l) {
    const std::string p = subgraph_prefix(prefix, l);
    const Var attended = nn::multi_head_attention(tape, x, x, x, same_instance, store, p + "/attn",
                                                  cfg.block.num_heads);
    x = nn::mlp_forward(tape, nn::concat_cols({x, attended}), store, p + "/mlp");
  }
  const Var pooled = nn::segment_max(x, segments);
  out.features = scatter_instances(tape, pooled, row_of_instance, e);
  return out;
}

AttentionProfile attention_weights(const Matrix& attributes, const std::vector<bool>& visible,
                                   const ParameterStore& store, const std::string& attn_prefix,
                                   int num_heads) {
  const Eigen::Index n = attributes.rows();
  AttentionProfile profile;
  profile.visible = visible;
  profile.weights = Matrix::Zero(n, n);
  const Matrix logits = nn::head_averaged_logits(attributes, attributes, store, attn_prefix, num_heads);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!visible[static_cast<std::size_t>(i)]) continue;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i && visible[static_cast<std::size_t>(j)]) max_logit = std::max(max_logit, logits(i, j));
    }
    if (!std::isfinite(max_logit)) continue;
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i && visible[static_cast<std::size_t>(j)]) {
        profile.weights(i, j) = std::exp(logits(i, j) - max_logit);
        total += profile.weights(i, j);
      }
    }
    profile.weights.row(i) /= total;
  }
  return profile;
}

BoolMatrix coarse_select(const AttentionProfile& profile, double epsilon) {
  const Eigen::Index n = profile.weights.rows();
  BoolMatrix selected = BoolMatrix::Constant(n, n, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!profile.visible[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i || !profile.visible[static_cast<std::size_t>(j)]) continue;
      // A zero threshold admits the whole support even if a weight underflows.
      selected(i, j) = epsilon <= 0.0 || profile.weights(i, j) > epsilon;
    }
  }
  return selected;
}

BoolMatrix union_instance_set(const BoolMatrix& bev, const BoolMatrix& fpv) {
  if (bev.rows() != fpv.rows() || bev.cols() != fpv.cols()) {
    throw std::invalid_argument("union_instance_set: instance sets over different instances");
  }
  BoolMatrix out = bev || fpv;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (!out.row(i).any()) {
      out.row(i).setConstant(true);
      out(i, i) = false;
    }
  }
  return out;
}

BoolMatrix plain_neighborhood(const std::vector<bool>& visible) {
  const auto n = static_cast<Eigen::Index>(visible.size());
  BoolMatrix mask = nn::broadcast_key_mask(n, visible);
  for (Eigen::Index i = 0; i < n; ++i) mask(i, i) = false;
  return mask;
}

Var fine_attention(Tape& tape, const Var& attributes, const BoolMatrix& instance_set,
                   ParameterStore& store, const std::string& attn_prefix, int num_heads) {
  return nn::multi_head_attention(tape, attributes, attributes, attributes, instance_set, store,
                                  attn_prefix, num_heads);
}

GlobalGraphResult global_graph_forward(Tape& tape, const StateFeatures& bev,
                                       const StateFeatures& fpv, ParameterStore& store,
                                       const ModelConfig& cfg, GlobalGraphMode mode,
                                       double epsilon) {
  if (bev.size() != fpv.size()) {
    throw std::invalid_argument("global_graph_forward: branches have different instance counts");
  }
  const int heads = cfg.block.num_heads;
  const BoolMatrix bev_plain = plain_neighborhood(bev.visible);
  const BoolMatrix fpv_plain = plain_neighborhood(fpv.visible);
  const Eigen::VectorXd bev_rows = visibility_weights(bev.visible);
  const Eigen::VectorXd fpv_rows = visibility_weights(fpv.visible);

  GlobalGraphResult result;
  Var a_bev = bev.features;
  Var a_fpv = fpv.features;
  for (int l = 0; l < cfg.global_layers; ++l) {
    const std::string pb = global_prefix("bev/encoder", l);
    const std::string pf = global_prefix("fpv/encoder", l);
    BoolMatrix bev_mask = bev_plain;
    BoolMatrix fpv_mask = fpv_plain;
    if (mode == GlobalGraphMode::kCrossView) {
      AttentionProfile prof_bev = attention_weights(a_bev.value(), bev.visible, store, pb + "/attn", heads);
      AttentionProfile prof_fpv = attention_weights(a_fpv.value(), fpv.visible, store, pf + "/attn", heads);
      const BoolMatrix shared = union_instance_set(coarse_select(prof_bev, epsilon),
                                                   coarse_select(prof_fpv, epsilon));
      bev_mask = shared && bev_plain;
      fpv_mask = shared && fpv_plain;
      result.bev_profiles.push_back(std::move(prof_bev));
      result.fpv_profiles.push_back(std::move(prof_fpv));
      result.instance_sets.push_back(shared);
    }
    const Var att_bev = fine_attention(tape, a_bev, bev_mask, store, pb + "/attn", heads);
    const Var att_fpv = fine_attention(tape, a_fpv, fpv_mask, store, pf + "/attn", heads);
    Var next_bev = nn::mlp_forward(tape, nn::concat_cols({a_bev, att_bev}), store, pb + "/mlp");
    Var next_fpv = nn::mlp_forward(tape, nn::concat_cols({a_fpv, att_fpv}), store, pf + "/mlp");
    if (bev_rows.minCoeff() < 1.0) next_bev = nn::scale_rows(next_bev, bev_rows);
    if (fpv_rows.minCoeff() < 1.0) next_fpv = nn::scale_rows(next_fpv, fpv_rows);
    a_bev = next_bev;
    a_fpv = next_fpv;
  }
  result.bev = StateFeatures{a_bev, bev.visible};
  result.fpv = StateFeatures{a_fpv, fpv.visible};
  return result;
}

Var sparse_goal_loss(Tape& tape, const StateFeatures& features,
                     const std::vector<int>& owner_instance, int positive, ParameterStore& store,
                     const std::string& prefix) {
  const auto n = static_cast<Eigen::Index>(owner_instance.size());
  if (n == 0) throw std::invalid_argument("sparse_goal_loss: no sparse candidates");
  if (positive < 0 || positive >= n) {
    throw std::invalid_argument("sparse_goal_loss: exactly one positive label is required");
  }
  const Var owners = nn::gather_rows(features.features, owner_instance);
  const Var scores = nn::reshape(nn::mlp_forward(tape, owners, store, prefix + "/sparse_scorer"), 1, n);
  Matrix target = Matrix::Zero(1, n);
  target(0, positive) = 1.0;
  return nn::cross_entropy(nn::softmax(scores), target);
}

Var sparse_goal_loss(Tape& tape, const StateFeatures& features,
                     const std::vector<int>& owner_instance, const std::vector<double>& labels,
                     ParameterStore& store, const std::string& prefix) {
  if (labels.size() != owner_instance.size()) {
    throw std::invalid_argument("sparse_goal_loss: one label per sparse candidate is required");
  }
  int positive = -1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0.0) continue;
    if (labels[i] != 1.0 || positive >= 0) {
      throw std::invalid_argument("sparse_goal_loss: exactly one positive label is required");
    }
    positive = static_cast<int>(i);
  }
  if (positive < 0) throw std::invalid_argument("sparse_goal_loss: exactly one positive label is required");
  return sparse_goal_loss(tape, features, owner_instance, positive, store, prefix);
}

}  // namespace xvtp::encoder
