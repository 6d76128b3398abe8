#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace xvtp::nn {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Parameter;
class Tape;

// Handle to a matrix recorded on a Tape (a differentiable array). Every
// tensor in the model is a 2-D binary64 matrix; vectors are single rows.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode recording of matrix operations. A tape built with
// record = false only evaluates values (inference).
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix value);
  // Differentiable input whose gradient is readable through grad() after
  // backward().
  Var leaf(Matrix value);
  // Leaf bound to a parameter; backward() accumulates into param.grad. The
  // value is copied on first use, so later edits to `param` are not seen by
  // this tape.
  Var param(Parameter& param);

  // Records an op. `backward` receives d(loss)/d(output) and must route it
  // to the parents through accumulate().
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, bool needs_grad, Backward backward);

  void accumulate(const Var& target, const Matrix& grad);
  template <typename Expr>
  void accumulate_expr(const Var& target, const Expr& grad) {
    Node& n = nodes_[static_cast<std::size_t>(target.id())];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = grad;
    } else {
      n.grad += grad;
    }
  }

  // Seeds d(loss)/d(loss) = 1 for a 1x1 loss and propagates.
  void backward(const Var& loss);
  const Matrix& grad(const Var& v) const;

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

// ---------------------------------------------------------------------------
// Differentiable primitives. Shapes are checked and mismatches throw
// std::invalid_argument naming expected and actual shapes.

Var matmul(const Var& a, const Var& b);
Var matmul_transposed(const Var& a, const Var& b);  // a * b^T
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // broadcast a 1 x c row over a
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
// Multiplies row r of `a` by weights(r); weights are constants.
Var scale_rows(const Var& a, const Eigen::VectorXd& weights);
Var relu(const Var& a);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& a, const std::vector<int>& rows);
// Row-major reinterpretation of the elements of `a`.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
// Row-wise softmax; entries with mask == false get weight 0 and rows
// without any unmasked entry are all zero.
Var masked_softmax_rows(const Var& logits, const BoolMatrix& mask);
Var softmax_rows(const Var& logits);
// Row-wise (x - mean) / sqrt(var + eps), no affine part.
Var layer_norm_rows(const Var& a, double eps = 1e-9);
// Column-wise max over each row segment [start, start + length). Every
// segment must be non-empty.
Var segment_max(const Var& a, const std::vector<std::pair<int, int>>& segments);
Var sum(const Var& a);
// sum(weights .* a) with constant weights of the same shape.
Var weighted_sum(const Var& a, const Matrix& weights);
// log(max(a, eps)); zero gradient where clamped.
Var log_eps(const Var& a, double eps);
// Euclidean norm of every row, as a column; the gradient at 0 is 0.
Var row_norms(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double f, const Var& a) { return scale(a, f); }

std::string shape_string(Eigen::Index rows, Eigen::Index cols);

}  // namespace xvtp::nn
