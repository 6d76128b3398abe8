#include "xvtp/nn/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "xvtp/nn/parameters.hpp"

namespace xvtp::nn {

std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return "(" + std::to_string(rows) + ", " + std::to_string(cols) + ")";
}

namespace {

void require_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("vars recorded on different tapes");
}

void require_shape(const char* op, const Var& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.rows() != rows || v.cols() != cols) {
    throw std::invalid_argument(std::string(op) + ": expected shape " + shape_string(rows, cols) +
                                ", got " + shape_string(v.rows(), v.cols()));
  }
}

}  // namespace

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, record_, nullptr, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  if (const auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  nodes_.push_back(Node{p.value, {}, record_, &p, {}});
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) needs = needs || p.requires_grad();
  return record(std::move(value), needs, std::move(backward));
}

Var Tape::record(Matrix value, bool needs_grad, Backward backward) {
  const bool needs = record_ && needs_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(backward) : Backward{}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(const Var& target, const Matrix& grad) { accumulate_expr(target, grad); }

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss from another tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward: loss must be 1x1, got " +
                                shape_string(loss.rows(), loss.cols()));
  }
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  Node& root = nodes_[static_cast<std::size_t>(loss.id())];
  if (!root.requires_grad) return;
  root.grad = Matrix::Ones(1, 1);
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) {
      // Closures only touch parents (lower ids) and never reallocate nodes_.
      n.backward(*this, n.grad);
    } else if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->grad = Matrix::Zero(n.value.rows(), n.value.cols());
      n.param->grad += n.grad;
    }
  }
}

const Matrix& Tape::grad(const Var& v) const {
  static const Matrix kEmpty;
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  return n.grad.size() == 0 ? kEmpty : n.grad;
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ, " +
                                shape_string(a.rows(), a.cols()) + " x " +
                                shape_string(b.rows(), b.cols()));
  }
  return a.tape()->record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate_expr(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate_expr(b, a.value().transpose() * g);
  });
}

Var matmul_transposed(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_transposed: column counts differ, " +
                                shape_string(a.rows(), a.cols()) + " vs " +
                                shape_string(b.rows(), b.cols()));
  }
  return a.tape()->record(a.value() * b.value().transpose(), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            if (a.requires_grad()) t.accumulate_expr(a, g * b.value());
                            if (b.requires_grad()) t.accumulate_expr(b, g.transpose() * a.value());
                          });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_shape("add", b, a.rows(), a.cols());
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_shape("sub", b, a.rows(), a.cols());
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate_expr(b, -g);
  });
}

Var add_row(const Var& a, const Var& row) {
  require_same_tape(a, row);
  require_shape("add_row", row, 1, a.cols());
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (row.requires_grad()) t.accumulate_expr(row, g.colwise().sum());
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_shape("hadamard", b, a.rows(), a.cols());
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            if (a.requires_grad()) t.accumulate_expr(a, g.cwiseProduct(b.value()));
                            if (b.requires_grad()) t.accumulate_expr(b, g.cwiseProduct(a.value()));
                          });
}

Var scale(const Var& a, double factor) {
  return a.tape()->record(a.value() * factor, {a}, [a, factor](Tape& t, const Matrix& g) {
    t.accumulate_expr(a, g * factor);
  });
}

Var scale_rows(const Var& a, const Eigen::VectorXd& weights) {
  if (weights.size() != a.rows()) {
    throw std::invalid_argument("scale_rows: expected " + std::to_string(a.rows()) +
                                " weights, got " + std::to_string(weights.size()));
  }
  Matrix out = weights.asDiagonal() * a.value();
  return a.tape()->record(std::move(out), {a}, [a, weights](Tape& t, const Matrix& g) {
    t.accumulate_expr(a, weights.asDiagonal() * g);
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate_expr(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    require_shape("concat_cols", p, rows, p.cols());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  Tape* tape = parts.front().tape();
  bool needs = false;
  for (const Var& p : parts) needs = needs || p.requires_grad();
  return tape->record(std::move(out), needs, [parts](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : parts) {
      if (p.requires_grad()) t.accumulate_expr(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    require_shape("concat_rows", p, p.rows(), cols);
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  Tape* tape = parts.front().tape();
  bool needs = false;
  for (const Var& p : parts) needs = needs || p.requires_grad();
  return tape->record(std::move(out), needs, [parts](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : parts) {
      if (p.requires_grad()) t.accumulate_expr(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::invalid_argument("slice_cols: columns [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") out of range for " +
                                shape_string(a.rows(), a.cols()));
  }
  return a.tape()->record(a.value().middleCols(start, count), {a},
                          [a, start, count](Tape& t, const Matrix& g) {
                            Matrix full = Matrix::Zero(a.rows(), a.cols());
                            full.middleCols(start, count) = g;
                            t.accumulate(a, full);
                          });
}

Var gather_rows(const Var& a, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw std::invalid_argument("gather_rows: row " + std::to_string(rows[i]) +
                                  " out of range for " + shape_string(a.rows(), a.cols()));
    }
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  return a.tape()->record(std::move(out), {a}, [a, rows](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) full.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a, full);
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.rows() * a.cols()) {
    throw std::invalid_argument("reshape: cannot view " + shape_string(a.rows(), a.cols()) +
                                " as " + shape_string(rows, cols));
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor src = a.value();
  Matrix out = Eigen::Map<const RowMajor>(src.data(), rows, cols);
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const RowMajor gr = g;
    Matrix back = Eigen::Map<const RowMajor>(gr.data(), a.rows(), a.cols());
    t.accumulate(a, back);
  });
}

Var masked_softmax_rows(const Var& logits, const BoolMatrix& mask) {
  if (mask.rows() != logits.rows() || mask.cols() != logits.cols()) {
    throw std::invalid_argument("masked_softmax_rows: mask shape " +
                                shape_string(mask.rows(), mask.cols()) + " != logits shape " +
                                shape_string(logits.rows(), logits.cols()));
  }
  const Matrix& x = logits.value();
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c)) max_logit = std::max(max_logit, x(r, c));
    }
    if (!std::isfinite(max_logit)) continue;
    double total = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c)) {
        out(r, c) = std::exp(x(r, c) - max_logit);
        total += out(r, c);
      }
    }
    out.row(r) /= total;
  }
  Matrix y = out;
  return logits.tape()->record(std::move(out), {logits}, [logits, y](Tape& t, const Matrix& g) {
    const Eigen::VectorXd dot = (g.cwiseProduct(y)).rowwise().sum();
    Matrix gx = y.cwiseProduct(g - dot.replicate(1, g.cols()));
    t.accumulate(logits, gx);
  });
}

Var softmax_rows(const Var& logits) {
  return masked_softmax_rows(logits, BoolMatrix::Constant(logits.rows(), logits.cols(), true));
}

Var layer_norm_rows(const Var& a, double eps) {
  const Matrix& x = a.value();
  const Eigen::Index d = x.cols();
  const Eigen::VectorXd mean = x.rowwise().mean();
  const Matrix centered = x.colwise() - mean;
  const Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(d)) + eps).rsqrt();
  Matrix y = inv_std.asDiagonal() * centered;
  Matrix y_copy = y;
  return a.tape()->record(std::move(y), {a},
                          [a, y_copy, inv_std, d](Tape& t, const Matrix& g) {
                            // dx = inv_std * (g - mean(g) - y * mean(g .* y))
                            const Eigen::VectorXd g_mean = g.rowwise().mean();
                            const Eigen::VectorXd gy_mean =
                                g.cwiseProduct(y_copy).rowwise().sum() / static_cast<double>(d);
                            Matrix dx = g;
                            dx.colwise() -= g_mean;
                            dx -= gy_mean.asDiagonal() * y_copy;
                            t.accumulate_expr(a, inv_std.asDiagonal() * dx);
                          });
}

Var segment_max(const Var& a, const std::vector<std::pair<int, int>>& segments) {
  const Matrix& x = a.value();
  Matrix out(static_cast<Eigen::Index>(segments.size()), x.cols());
  std::vector<std::vector<int>> argmax(segments.size(), std::vector<int>(static_cast<std::size_t>(x.cols())));
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto [start, length] = segments[s];
    if (length <= 0 || start < 0 || start + length > x.rows()) {
      throw std::invalid_argument("segment_max: invalid segment [" + std::to_string(start) + ", " +
                                  std::to_string(start + length) + ") for " +
                                  shape_string(x.rows(), x.cols()));
    }
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      int best = start;
      for (int r = start + 1; r < start + length; ++r) {
        if (x(r, c) > x(best, c)) best = r;
      }
      argmax[s][static_cast<std::size_t>(c)] = best;
      out(static_cast<Eigen::Index>(s), c) = x(best, c);
    }
  }
  return a.tape()->record(std::move(out), {a}, [a, argmax](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t s = 0; s < argmax.size(); ++s) {
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        full(argmax[s][static_cast<std::size_t>(c)], c) += g(static_cast<Eigen::Index>(s), c);
      }
    }
    t.accumulate(a, full);
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate_expr(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var weighted_sum(const Var& a, const Matrix& weights) {
  if (weights.rows() != a.rows() || weights.cols() != a.cols()) {
    throw std::invalid_argument("weighted_sum: weights shape " +
                                shape_string(weights.rows(), weights.cols()) + " != " +
                                shape_string(a.rows(), a.cols()));
  }
  Matrix out(1, 1);
  out(0, 0) = a.value().cwiseProduct(weights).sum();
  return a.tape()->record(std::move(out), {a}, [a, weights](Tape& t, const Matrix& g) {
    t.accumulate_expr(a, weights * g(0, 0));
  });
}

Var log_eps(const Var& a, double eps) {
  Matrix out = a.value().array().max(eps).log().matrix();
  return a.tape()->record(std::move(out), {a}, [a, eps](Tape& t, const Matrix& g) {
    t.accumulate_expr(a, (a.value().array() > eps).select(g.array() / a.value().array(), 0.0).matrix());
  });
}

Var row_norms(const Var& a) {
  Eigen::VectorXd norms = a.value().rowwise().norm();
  Matrix out = norms;
  return a.tape()->record(std::move(out), {a}, [a, norms](Tape& t, const Matrix& g) {
    Matrix gx = Matrix::Zero(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      if (norms(r) > 0) gx.row(r) = a.value().row(r) * (g(r, 0) / norms(r));
    }
    t.accumulate(a, gx);
  });
}

}  // namespace xvtp::nn
