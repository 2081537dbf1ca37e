#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace emomsase::graph {

using Matrix = Eigen::MatrixXd;

/// Trainable tensor. Vectors are stored as column matrices (n x 1), context
/// vectors as rows (1 x n) so they act as a one-output dense layer.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;

  Param(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  explicit Var(std::size_t id) : id_(id) {}
  std::size_t id_ = static_cast<std::size_t>(-1);
};

/// Dynamically recorded reverse-mode tape. Rows of every node are batch items.
///
/// Each op pushes its output value together with a closure that reads the output's
/// gradient and accumulates into its inputs. backward() walks the nodes in reverse
/// push order once; a second call throws TapeConsumed.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to a Param; one node per Param per tape. Frozen params act as constants.
  Var param(Param& p);

  const Matrix& value(Var v) const { return nodes_.at(v.id()).value; }
  const Matrix& grad(Var v) const { return nodes_.at(v.id()).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Seeds d(output) = loss_grad for a 1x1 output and accumulates into Param::grad.
  void backward(Var output, double loss_grad = 1.0);

  // Used by op implementations.
  Var push(Matrix value, std::span<const Var> inputs, Backward backward);
  Matrix& grad_mut(Var v) { return nodes_[v.id()].grad; }
  Matrix& grad_mut(std::size_t id) { return nodes_[id].grad; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Param* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, std::size_t> param_nodes_;
  bool consumed_ = false;
};

// ---- primitives ------------------------------------------------------------

Var matmul_nt(Tape& t, Var x, Var w);          // x * w^T
Var dense(Tape& t, Var x, Var w, Var b);       // x * w^T + b^T (b is out x 1)
Var add(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);                // elementwise
Var mul_col(Tape& t, Var a, Var col);          // a (B x K) scaled rowwise by col (B x 1)
Var sigmoid(Tape& t, Var x);
Var tanh(Tape& t, Var x);
Var relu(Tape& t, Var x);
Var softmax_rows(Tape& t, Var x);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var slice_cols(Tape& t, Var x, Eigen::Index start, Eigen::Index count);
Var sum(Tape& t, std::span<const Var> parts);
Var mean(Tape& t, std::span<const Var> parts);  // mean pooling over the list axis
Var detach(Tape& t, Var x);

/// Fused LSTM step. state is [h | c] (B x 2H); W is 4H x F, U is 4H x H, b is 4H x 1,
/// gate blocks ordered input, forget, cell, output. Returns the next [h | c].
Var lstm_cell(Tape& t, Var x, Var state, Var w, Var u, Var b);

/// Mean over the batch of -log(p[y] + 1e-12). Returns a 1x1 node.
Var cross_entropy(Tape& t, Var probs, std::span<const int> labels);

inline constexpr double kProbEpsilon = 1e-12;

Matrix softmax_rows(const Matrix& x);

}  // namespace emomsase::graph
