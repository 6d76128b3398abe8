#pragma once

#include <string>
#include <vector>

#include "xvtp/nn/parameters.hpp"
#include "xvtp/nn/tape.hpp"

namespace xvtp::nn {

// Width settings shared by every learned block.
struct BlockSpec {
  int embedding_size = 128;
  int hidden_size = 256;
  int num_heads = 4;
  int depth = 2;  // affine layers per MLP / feed-forward network

  void validate() const;
};

inline constexpr double kLogEpsilon = 1e-12;

// Two affine layers with a ReLU in between:
//   relu(x W1 + b1) W2 + b2
void add_mlp(ParameterStore& store, const std::string& prefix, int in, int hidden, int out);
Var mlp_forward(Tape& tape, const Var& x, ParameterStore& store, const std::string& prefix);

// softmax(Q K^T / sqrt(d_k)) V without projections. Throws on zero keys.
Var dot_product_attention(const Var& q, const Var& k, const Var& v);

void add_attention(ParameterStore& store, const std::string& prefix, int query_in, int kv_in,
                   int embedding);

// Projected multi-head attention. key_mask is n_queries x n_keys; rows
// with no admissible key produce an exact zero output row.
Var multi_head_attention(Tape& tape, const Var& q, const Var& k, const Var& v,
                         const BoolMatrix& key_mask, ParameterStore& store,
                         const std::string& prefix, int num_heads);

// Raw (unscaled) query-key dot products of the attention block at `prefix`,
// averaged over heads. Plain values; nothing is recorded.
Matrix head_averaged_logits(const Matrix& q_in, const Matrix& k_in, const ParameterStore& store,
                            const std::string& prefix, int num_heads);

// Mask broadcasting one admissibility flag per key to every query row.
BoolMatrix broadcast_key_mask(Eigen::Index queries, const std::vector<bool>& keys);

void add_transformer(ParameterStore& store, const std::string& prefix, int embedding, int kv_in,
                     int hidden);

// LN(Q + FFN(MHA(Q, K, V))) * gamma + beta.
Var transformer_layer(Tape& tape, const Var& q, const Var& k, const Var& v,
                      const BoolMatrix& key_mask, ParameterStore& store,
                      const std::string& prefix, int num_heads);

// Column-wise max over the rows flagged valid; 1 x d. Throws when no row
// is valid.
Var max_pool_agg(const Var& x, const std::vector<bool>& valid);

Var softmax(const Var& x);

// -sum(target .* log(pred + eps)). Targets must be non-negative and sum to 1.
Var cross_entropy(const Var& pred_probs, const Matrix& target_probs);

}  // namespace xvtp::nn
