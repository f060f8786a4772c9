#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "multiflock/matrix.hpp"

namespace multiflock {

/// Storage shared between a Tensor handle and the tape entries that reference it.
struct TensorNode {
  Matrix value;
  Matrix grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
};

/// Dense 2-D float64 value. Handles are cheap to copy and share their node.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::string shape() const;

  const Matrix& value() const { return node_->value; }
  /// Mutable access for optimizers and finite-difference probes. Not recorded.
  Matrix& mutable_value() { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  /// Accumulated gradient; zeros of the value's shape when nothing has reached it.
  const Matrix& grad() const;
  void zero_grad();

  const std::shared_ptr<TensorNode>& node() const { return node_; }

private:
  std::shared_ptr<TensorNode> node_;
};

/// Ordered record of backward rules. Entries are appended in forward order,
/// so replaying them in reverse is a valid topological traversal.
class Tape {
public:
  using Rule = std::function<void()>;

  void record(Rule rule) { rules_.push_back(std::move(rule)); }
  std::size_t size() const { return rules_.size(); }
  bool empty() const { return rules_.empty(); }
  void clear() { rules_.clear(); }

  /// Runs every rule once in reverse order, then clears the tape.
  void replay_backward();

  /// Tape of the calling thread, or nullptr when none is active (no-graph mode).
  static Tape* active();

private:
  friend class TapeScope;
  std::vector<Rule> rules_;
};

/// Makes `tape` the calling thread's active tape for the lifetime of the scope.
class TapeScope {
public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

private:
  Tape* previous_;
};

/// Seeds d(loss)/d(loss) = 1 and replays the active tape. The tape is cleared.
/// Throws ShapeError when `loss` is not 1x1 and std::logic_error without an active tape.
void backward(const Tensor& loss);

// --- operations ----------------------------------------------------------
// Every op checks shapes (ShapeError names both operands) and finiteness of its
// result (NumericError). An op is recorded when a tape is active and any input
// requires a gradient.

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// Elementwise sum; `b` may also be a 1 x cols row vector broadcast over rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor square(const Tensor& a);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
/// Stacks tensors with equal column counts vertically.
Tensor concat_rows(std::span<const Tensor> parts);
Tensor transpose(const Tensor& a);
Tensor scalar_mul(const Tensor& a, double c);
Tensor row_select(const Tensor& a, std::span<const Eigen::Index> rows);
/// 1x1 sum of all entries.
Tensor sum(const Tensor& a);

enum class ActivationKind { sigmoid, tanh, relu, leaky_relu, elu };

struct Activation {
  ActivationKind kind = ActivationKind::sigmoid;
  double param = 0.0;  // leaky_relu slope or elu alpha

  static Activation sigmoid() { return {ActivationKind::sigmoid, 0.0}; }
  static Activation tanh() { return {ActivationKind::tanh, 0.0}; }
  static Activation relu() { return {ActivationKind::relu, 0.0}; }
  static Activation leaky_relu(double slope = 0.2) { return {ActivationKind::leaky_relu, slope}; }
  static Activation elu(double alpha = 1.0) { return {ActivationKind::elu, alpha}; }
};

/// Elementwise activation. At the relu / leaky_relu kink (x == 0) the
/// derivative of the x > 0 branch is used.
Tensor activation(const Tensor& a, Activation kind);

/// Row-wise softmax over entries where `mask` is nonzero; masked-out entries
/// are 0. Throws std::invalid_argument when a row has no admissible entry.
Tensor masked_softmax(const Tensor& logits, const Matrix& mask);

/// out(i, j) = col_a(i) + col_b(j) for two column vectors.
Tensor outer_sum(const Tensor& col_a, const Tensor& col_b);

/// Pairwise two-layer scorer over every ordered pair (i, j):
///   out(i, j) = b2 + sum_k w2(k) * relu(left(i, k) + right(j, k) + b1(k))
/// left, right: n x d; b1, w2: 1 x d; b2: 1 x 1.
Tensor pairwise_mlp(const Tensor& left, const Tensor& right, const Tensor& b1, const Tensor& w2,
                    const Tensor& b2);

// --- gradient checking -------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_input = 0;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  bool passed = false;
};

/// Compares the tape gradient of scalar-valued `f` with central differences
/// (f(x+h) - f(x-h)) / 2h for every entry of every input. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-3); the floor keeps
/// entries whose true gradient is ~0 from dividing round-off by round-off.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs,
                           double h = 1e-5, double tol = 1e-6);

}  // namespace multiflock
