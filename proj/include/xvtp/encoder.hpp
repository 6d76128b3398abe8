#pragma once

#include <string>
#include <vector>

#include "xvtp/config.hpp"
#include "xvtp/nn/blocks.hpp"
#include "xvtp/scene.hpp"

namespace xvtp::encoder {

using nn::BoolMatrix;
using nn::Matrix;
using nn::ParameterStore;
using nn::Tape;
using nn::Var;

// Per-instance features of one view (N x embedding). Rows of instances that
// are not visible in the view are exactly zero.
struct StateFeatures {
  Var features;
  std::vector<bool> visible;

  int size() const { return static_cast<int>(visible.size()); }
};

// Row-stochastic coarse weights alpha(i, j) over visible j != i. Rows of
// target instances that are not visible are all zero.
struct AttentionProfile {
  Matrix weights;
  std::vector<bool> visible;
};

// Registers one view's encoder under `prefix` ("bev/encoder", "fpv/encoder").
void add_encoder_params(ParameterStore& store, const std::string& prefix, const ModelConfig& cfg);

// Vector-level refinement within each instance followed by max pooling.
StateFeatures subgraph_forward(Tape& tape, const VectorizedView& view, ParameterStore& store,
                               const std::string& prefix, const ModelConfig& cfg);

// Coarse weights from the attention block at `attn_prefix`: unscaled
// query-key logits averaged over heads, softmax over the support.
AttentionProfile attention_weights(const Matrix& attributes, const std::vector<bool>& visible,
                                   const ParameterStore& store, const std::string& attn_prefix,
                                   int num_heads);

// N*(i) = { j : alpha(i, j) > epsilon }, as an N x N membership matrix.
BoolMatrix coarse_select(const AttentionProfile& profile, double epsilon);

// Row-wise union; rows whose union is empty fall back to every j != i.
BoolMatrix union_instance_set(const BoolMatrix& bev, const BoolMatrix& fpv);

// Attention of every instance over its own N*(i) (restricted to the keys
// visible in this view).
Var fine_attention(Tape& tape, const Var& attributes, const BoolMatrix& instance_set,
                   ParameterStore& store, const std::string& attn_prefix, int num_heads);

// Key mask used by the plain global graph: visible j != i.
BoolMatrix plain_neighborhood(const std::vector<bool>& visible);

struct GlobalGraphResult {
  StateFeatures bev;
  StateFeatures fpv;
  // Per layer, the coarse profiles (empty in plain mode).
  std::vector<AttentionProfile> bev_profiles;
  std::vector<AttentionProfile> fpv_profiles;
  std::vector<BoolMatrix> instance_sets;
};

GlobalGraphResult global_graph_forward(Tape& tape, const StateFeatures& bev,
                                       const StateFeatures& fpv, ParameterStore& store,
                                       const ModelConfig& cfg, GlobalGraphMode mode,
                                       double epsilon);

// Sparse goal scoring loss: each sparse candidate is scored through the
// state feature of its owning lane instance; softmax over all sparse
// candidates, cross entropy against a one-hot positive.
Var sparse_goal_loss(Tape& tape, const StateFeatures& features,
                     const std::vector<int>& owner_instance, int positive, ParameterStore& store,
                     const std::string& prefix);

// Same loss from a 0/1 label per sparse candidate; anything but exactly
// one positive is rejected.
Var sparse_goal_loss(Tape& tape, const StateFeatures& features,
                     const std::vector<int>& owner_instance, const std::vector<double>& labels,
                     ParameterStore& store, const std::string& prefix);

std::string subgraph_prefix(const std::string& prefix, int layer);
std::string global_prefix(const std::string& prefix, int layer);

}  // namespace xvtp::encoder
