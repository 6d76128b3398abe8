#include "xvtp/nn/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace xvtp::nn {

void BlockSpec::validate() const {
  if (embedding_size <= 0 || hidden_size <= 0 || num_heads <= 0) {
    throw std::invalid_argument("BlockSpec: sizes must be positive");
  }
  if (embedding_size % num_heads != 0) {
    throw std::invalid_argument("BlockSpec: embedding_size " + std::to_string(embedding_size) +
                                " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (depth != 2) throw std::invalid_argument("BlockSpec: only depth 2 is supported");
}

void add_mlp(ParameterStore& store, const std::string& prefix, int in, int hidden, int out) {
  store.add_glorot(prefix + "/w1", in, hidden);
  store.add_constant(prefix + "/b1", 1, hidden, 0.0);
  store.add_glorot(prefix + "/w2", hidden, out);
  store.add_constant(prefix + "/b2", 1, out, 0.0);
}

Var mlp_forward(Tape& tape, const Var& x, ParameterStore& store, const std::string& prefix) {
  Parameter& w1 = store.at(prefix + "/w1");
  if (x.cols() != w1.value.rows()) {
    throw std::invalid_argument("mlp " + prefix + ": expected input width " +
                                std::to_string(w1.value.rows()) + ", got " +
                                std::to_string(x.cols()));
  }
  const Var h = relu(add_row(matmul(x, tape.param(w1)), tape.param(store.at(prefix + "/b1"))));
  return add_row(matmul(h, tape.param(store.at(prefix + "/w2"))),
                 tape.param(store.at(prefix + "/b2")));
}

Var dot_product_attention(const Var& q, const Var& k, const Var& v) {
  if (k.rows() == 0) throw std::invalid_argument("dot_product_attention: zero keys");
  if (k.rows() != v.rows()) {
    throw std::invalid_argument("dot_product_attention: " + std::to_string(k.rows()) +
                                " keys but " + std::to_string(v.rows()) + " values");
  }
  if (q.cols() != k.cols() || q.cols() == 0) {
    throw std::invalid_argument("dot_product_attention: query width " + std::to_string(q.cols()) +
                                " != key width " + std::to_string(k.cols()));
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(k.cols()));
  return matmul(softmax_rows(scale(matmul_transposed(q, k), inv_sqrt)), v);
}

void add_attention(ParameterStore& store, const std::string& prefix, int query_in, int kv_in,
                   int embedding) {
  store.add_glorot(prefix + "/wq", query_in, embedding);
  store.add_constant(prefix + "/bq", 1, embedding, 0.0);
  store.add_glorot(prefix + "/wk", kv_in, embedding);
  store.add_constant(prefix + "/bk", 1, embedding, 0.0);
  store.add_glorot(prefix + "/wv", kv_in, embedding);
  store.add_constant(prefix + "/bv", 1, embedding, 0.0);
  store.add_glorot(prefix + "/wo", embedding, embedding);
  store.add_constant(prefix + "/bo", 1, embedding, 0.0);
}

BoolMatrix broadcast_key_mask(Eigen::Index queries, const std::vector<bool>& keys) {
  BoolMatrix mask(queries, static_cast<Eigen::Index>(keys.size()));
  for (std::size_t j = 0; j < keys.size(); ++j) {
    mask.col(static_cast<Eigen::Index>(j)).setConstant(keys[j]);
  }
  return mask;
}

Var multi_head_attention(Tape& tape, const Var& q, const Var& k, const Var& v,
                         const BoolMatrix& key_mask, ParameterStore& store,
                         const std::string& prefix, int num_heads) {
  Parameter& wq = store.at(prefix + "/wq");
  const auto embedding = wq.value.cols();
  if (embedding % num_heads != 0) {
    throw std::invalid_argument("attention " + prefix + ": embedding " +
                                std::to_string(embedding) + " not divisible by " +
                                std::to_string(num_heads) + " heads");
  }
  if (q.cols() != wq.value.rows()) {
    throw std::invalid_argument("attention " + prefix + ": expected query width " +
                                std::to_string(wq.value.rows()) + ", got " +
                                std::to_string(q.cols()));
  }
  if (k.rows() != v.rows()) {
    throw std::invalid_argument("attention " + prefix + ": " + std::to_string(k.rows()) +
                                " keys but " + std::to_string(v.rows()) + " values");
  }
  if (key_mask.rows() != q.rows() || key_mask.cols() != k.rows()) {
    throw std::invalid_argument("attention " + prefix + ": mask shape " +
                                shape_string(key_mask.rows(), key_mask.cols()) + ", expected " +
                                shape_string(q.rows(), k.rows()));
  }

  const Var qp = add_row(matmul(q, tape.param(wq)), tape.param(store.at(prefix + "/bq")));
  const Var kp = add_row(matmul(k, tape.param(store.at(prefix + "/wk"))),
                         tape.param(store.at(prefix + "/bk")));
  const Var vp = add_row(matmul(v, tape.param(store.at(prefix + "/wv"))),
                         tape.param(store.at(prefix + "/bv")));

  const Eigen::Index head_dim = embedding / num_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(num_heads));
  for (int h = 0; h < num_heads; ++h) {
    const Var qh = slice_cols(qp, h * head_dim, head_dim);
    const Var kh = slice_cols(kp, h * head_dim, head_dim);
    const Var vh = slice_cols(vp, h * head_dim, head_dim);
    const Var weights = masked_softmax_rows(scale(matmul_transposed(qh, kh), inv_sqrt), key_mask);
    heads.push_back(matmul(weights, vh));
  }
  const Var merged = num_heads == 1 ? heads.front() : concat_cols(heads);
  const Var out = add_row(matmul(merged, tape.param(store.at(prefix + "/wo"))),
                          tape.param(store.at(prefix + "/bo")));

  const Eigen::VectorXd has_key = key_mask.rowwise().any().cast<double>().matrix();
  if (has_key.minCoeff() > 0.0) return out;
  return scale_rows(out, has_key);
}

Matrix head_averaged_logits(const Matrix& q_in, const Matrix& k_in, const ParameterStore& store,
                            const std::string& prefix, int num_heads) {
  const Matrix qp = (q_in * store.at(prefix + "/wq").value).rowwise() +
                    store.at(prefix + "/bq").value.row(0);
  const Matrix kp = (k_in * store.at(prefix + "/wk").value).rowwise() +
                    store.at(prefix + "/bk").value.row(0);
  const Eigen::Index head_dim = qp.cols() / num_heads;
  Matrix total = Matrix::Zero(qp.rows(), kp.rows());
  for (int h = 0; h < num_heads; ++h) {
    total += qp.middleCols(h * head_dim, head_dim) * kp.middleCols(h * head_dim, head_dim).transpose();
  }
  return total / static_cast<double>(num_heads);
}

void add_transformer(ParameterStore& store, const std::string& prefix, int embedding, int kv_in,
                     int hidden) {
  add_attention(store, prefix + "/attn", embedding, kv_in, embedding);
  add_mlp(store, prefix + "/ffn", embedding, hidden, embedding);
  store.add_constant(prefix + "/ln_gamma", 1, embedding, 1.0);
  store.add_constant(prefix + "/ln_beta", 1, embedding, 0.0);
}

Var transformer_layer(Tape& tape, const Var& q, const Var& k, const Var& v,
                      const BoolMatrix& key_mask, ParameterStore& store,
                      const std::string& prefix, int num_heads) {
  const Var attended = multi_head_attention(tape, q, k, v, key_mask, store, prefix + "/attn", num_heads);
  const Var fed = mlp_forward(tape, attended, store, prefix + "/ffn");
  const Var normed = layer_norm_rows(add(q, fed));
  const Var gamma = tape.param(store.at(prefix + "/ln_gamma"));
  const Var beta = tape.param(store.at(prefix + "/ln_beta"));
  const Var ones = tape.constant(Matrix::Ones(normed.rows(), 1));
  return add_row(hadamard(normed, matmul(ones, gamma)), beta);
}

Var max_pool_agg(const Var& x, const std::vector<bool>& valid) {
  if (static_cast<Eigen::Index>(valid.size()) != x.rows()) {
    throw std::invalid_argument("max_pool_agg: " + std::to_string(valid.size()) +
                                " flags for " + std::to_string(x.rows()) + " rows");
  }
  std::vector<int> rows;
  for (std::size_t r = 0; r < valid.size(); ++r) {
    if (valid[r]) rows.push_back(static_cast<int>(r));
  }
  if (rows.empty()) throw std::invalid_argument("max_pool_agg: no valid rows");
  const Var kept = static_cast<Eigen::Index>(rows.size()) == x.rows() ? x : gather_rows(x, rows);
  return segment_max(kept, {{0, static_cast<int>(rows.size())}});
}

Var softmax(const Var& x) { return softmax_rows(x); }

Var cross_entropy(const Var& pred_probs, const Matrix& target_probs) {
  if (target_probs.rows() != pred_probs.rows() || target_probs.cols() != pred_probs.cols()) {
    throw std::invalid_argument("cross_entropy: target shape " +
                                shape_string(target_probs.rows(), target_probs.cols()) +
                                " != prediction shape " +
                                shape_string(pred_probs.rows(), pred_probs.cols()));
  }
  if ((target_probs.array() < 0.0).any()) {
    throw std::invalid_argument("cross_entropy: negative target probability");
  }
  if (target_probs.size() > 0 &&
      (target_probs.rowwise().sum().array() - 1.0).abs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("cross_entropy: target rows must sum to 1");
  }
  return scale(weighted_sum(log_eps(pred_probs, kLogEpsilon), target_probs), -1.0);
}

}  // namespace xvtp::nn
