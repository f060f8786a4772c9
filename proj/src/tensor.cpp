#include "multiflock/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <stdexcept>

#include "multiflock/errors.hpp"

namespace multiflock {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::string dims(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape() + " and " + b.shape());
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

Tensor make_output(Matrix value, const char* op, bool record) {
  // x * 0 is 0 for finite x and NaN otherwise, so the sum is 0 exactly when all
  // entries are finite. Vectorizes, unlike allFinite().
  if ((value.array() * 0.0).sum() != 0.0) throw NumericError(std::string(op) + " produced a non-finite value");
  return Tensor(std::move(value), record);
}

bool has_grad(const TensorNode& n) { return n.grad.size() != 0; }

template <typename Expr>
void accumulate(TensorNode& n, const Expr& g) {
  if (!n.requires_grad) return;
  if (!has_grad(n)) {
    n.grad = g;
  } else {
    n.grad.noalias() += g;
  }
}

}  // namespace

// --- Tensor ----------------------------------------------------------------

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<TensorNode>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m), requires_grad);
}

std::string Tensor::shape() const { return node_ ? dims(node_->value) : std::string("undefined"); }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() needs a 1x1 tensor, got " + shape());
  return node_->value(0, 0);
}

const Matrix& Tensor::grad() const {
  if (!has_grad(*node_)) node_->grad = Matrix::Zero(rows(), cols());
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.resize(0, 0); }

// --- Tape ------------------------------------------------------------------

void Tape::replay_backward() {
  std::vector<Rule> rules;
  rules.swap(rules_);
  for (auto it = rules.rbegin(); it != rules.rend(); ++it) (*it)();
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

namespace {

// Suspends recording for the lifetime of the scope.
class NoGradScope {
public:
  NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
  ~NoGradScope() { g_active_tape = previous_; }

private:
  Tape* previous_;
};

}  // namespace

void backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ShapeError("backward needs a scalar (1x1) loss, got " + loss.shape());
  Tape* tape = Tape::active();
  if (tape == nullptr) throw std::logic_error("backward called without an active tape");
  if (!loss.requires_grad()) {
    tape->clear();
    return;
  }
  loss.node()->grad = Matrix::Ones(1, 1);
  tape->replay_backward();
}

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  const bool rec = recording({&a, &b});
  Tensor out = make_output(a.value() * b.value(), "matmul", rec);
  if (rec) {
    g_active_tape->record([an = a.node(), bn = b.node(), on = out.node()] {
      if (!has_grad(*on)) return;
      if (an->requires_grad) accumulate(*an, on->grad * bn->value.transpose());
      if (bn->requires_grad) accumulate(*bn, an->value.transpose() * on->grad);
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_mismatch("matmul_nt", a, b);
  const bool rec = recording({&a, &b});
  Tensor out = make_output(a.value() * b.value().transpose(), "matmul_nt", rec);
  if (rec) {
    g_active_tape->record([an = a.node(), bn = b.node(), on = out.node()] {
      if (!has_grad(*on)) return;
      if (an->requires_grad) accumulate(*an, on->grad * bn->value);
      if (bn->requires_grad) accumulate(*bn, on->grad.transpose() * an->value);
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool same = a.rows() == b.rows() && a.cols() == b.cols();
  const bool row_bias = !same && b.rows() == 1 && b.cols() == a.cols();
  if (!same && !row_bias) shape_mismatch("add", a, b);
  const bool rec = recording({&a, &b});
  Matrix v = same ? Matrix(a.value() + b.value())
                  : Matrix(a.value().rowwise() + b.value().row(0));
  Tensor out = make_output(std::move(v), "add", rec);
  if (rec) {
    g_active_tape->record([an = a.node(), bn = b.node(), on = out.node(), row_bias] {
      if (!has_grad(*on)) return;
      accumulate(*an, on->grad);
      if (row_bias) {
        accumulate(*bn, on->grad.colwise().sum());
      } else {
        accumulate(*bn, on->grad);
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch("sub", a, b);
  const bool rec = recording({&a, &b});
  Tensor out = make_output(a.value() - b.value(), "sub", rec);
  if (rec) {
    g_active_tape->record([an = a.node(), bn = b.node(), on = out.node()] {
      if (!has_grad(*on)) return;
      accumulate(*an, on->grad);
      accumulate(*bn, -on->grad);
    });
  }
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch("hadamard", a, b);
  const bool rec = recording({&a, &b});
  Tensor out = make_output(a.value().cwiseProduct(b.value()), "hadamard", rec);
  if (rec) {
    g_active_tape->record([an = a.node(), bn = b.node(), on = out.node()] {
      if (!has_grad(*on)) return;
      if (an->requires_grad) accumulate(*an, on->grad.cwiseProduct(bn->value));
      if (bn->requires_grad) accumulate(*bn, on->grad.cwiseProduct(an->value));
    });
  }
  return out;
}

Tensor square(const Tensor& a) {
  const bool rec = recording({&a});
  Tensor out = make_output(a.value().cwiseAbs2(), "square", rec);
  if (rec) {
    g_active_tape->record([an = a.node(), on = out.node()] {
      if (!has_grad(*on)) return;
      accumulate(*an, 2.0 * on->grad.cwiseProduct(an->value));
    });
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_mismatch("concat_cols", a, b);
  const bool rec = recording({&a, &b});
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  Tensor out = make_output(std::move(v), "concat_cols", rec);
  if (rec) {
    const Eigen::Index left = a.cols();
    const Eigen::Index right = b.cols();
    g_active_tape->record([an = a.node(), bn = b.node(), on = out.node(), left, right] {
      if (!has_grad(*on)) return;
      accumulate(*an, on->grad.leftCols(left));
      accumulate(*bn, on->grad.rightCols(right));
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " + a.shape());
  const bool rec = recording({&a});
  Tensor out = make_output(a.value().middleCols(start, count), "slice_cols", rec);
  if (rec) {
    g_active_tape->record([an = a.node(), on = out.node(), start, count] {
      if (!has_grad(*on) || !an->requires_grad) return;
      if (!has_grad(*an)) an->grad = Matrix::Zero(an->value.rows(), an->value.cols());
      an->grad.middleCols(start, count) += on->grad;
    });
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Eigen::Index rows = 0;
  bool rec = false;
  for (const Tensor& t : parts) {
    if (t.cols() != parts[0].cols()) shape_mismatch("concat_rows", parts[0], t);
    rows += t.rows();
    rec = rec || recording({&t});
  }
  Matrix v(rows, parts[0].cols());
  std::vector<std::shared_ptr<TensorNode>> nodes;
  Eigen::Index at = 0;
  for (const Tensor& t : parts) {
    v.middleRows(at, t.rows()) = t.value();
    at += t.rows();
    nodes.push_back(t.node());
  }
  Tensor out = make_output(std::move(v), "concat_rows", rec);
  if (rec) {
    g_active_tape->record([nodes = std::move(nodes), on = out.node()] {
      if (!has_grad(*on)) return;
      Eigen::Index at = 0;
      for (const auto& n : nodes) {
        accumulate(*n, on->grad.middleRows(at, n->value.rows()));
        at += n->value.rows();
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const bool rec = recording({&a});
  Tensor out = make_output(a.value().transpose(), "transpose", rec);
  if (rec) {
    g_active_tape->record([an = a.node(), on = out.node()] {
      if (!has_grad(*on)) return;
      accumulate(*an, on->grad.transpose());
    });
  }
  return out;
}

Tensor scalar_mul(const Tensor& a, double c) {
  const bool rec = recording({&a});
  Tensor out = make_output(c * a.value(), "scalar_mul", rec);
  if (rec) {
    g_active_tape->record([an = a.node(), on = out.node(), c] {
      if (!has_grad(*on)) return;
      accumulate(*an, c * on->grad);
    });
  }
  return out;
}

Tensor row_select(const Tensor& a, std::span<const Eigen::Index> rows) {
  Matrix v(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= a.rows())
      throw ShapeError("row_select: row " + std::to_string(rows[k]) + " out of range for " + a.shape());
    v.row(static_cast<Eigen::Index>(k)) = a.value().row(rows[k]);
  }
  const bool rec = recording({&a});
  Tensor out = make_output(std::move(v), "row_select", rec);
  if (rec) {
    g_active_tape->record(
        [an = a.node(), on = out.node(), idx = std::vector<Eigen::Index>(rows.begin(), rows.end())] {
          if (!has_grad(*on) || !an->requires_grad) return;
          if (!has_grad(*an)) an->grad = Matrix::Zero(an->value.rows(), an->value.cols());
          for (std::size_t k = 0; k < idx.size(); ++k)
            an->grad.row(idx[k]) += on->grad.row(static_cast<Eigen::Index>(k));
        });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  const bool rec = recording({&a});
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  Tensor out = make_output(std::move(v), "sum", rec);
  if (rec) {
    g_active_tape->record([an = a.node(), on = out.node()] {
      if (!has_grad(*on)) return;
      accumulate(*an, Matrix::Constant(an->value.rows(), an->value.cols(), on->grad(0, 0)));
    });
  }
  return out;
}

// --- nonlinearities --------------------------------------------------------

Tensor activation(const Tensor& a, Activation act) {
  if ((act.kind == ActivationKind::leaky_relu || act.kind == ActivationKind::elu) && !(act.param > 0))
    throw std::invalid_argument("activation slope/alpha must be positive");
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  const double p = act.param;
  switch (act.kind) {
    case ActivationKind::sigmoid: y = x.array().logistic().matrix(); break;
    case ActivationKind::tanh:
      // tanh(x) = 2 sigmoid(2x) - 1; Eigen vectorizes logistic but not tanh for doubles.
      y = (2.0 * (2.0 * x.array()).logistic() - 1.0).matrix();
      break;
    case ActivationKind::relu: y = x.cwiseMax(0.0); break;
    case ActivationKind::leaky_relu: y = x.unaryExpr([p](double v) { return v >= 0 ? v : p * v; }); break;
    case ActivationKind::elu:
      // exp(x) - 1 rather than expm1: Eigen only vectorizes the former for doubles.
      y = (x.array() >= 0.0).select(x.array(), p * (x.array().min(0.0).exp() - 1.0)).matrix();
      break;
  }
  const bool rec = recording({&a});
  Tensor out = make_output(std::move(y), "activation", rec);
  if (rec) {
    g_active_tape->record([an = a.node(), on = out.node(), act] {
      if (!has_grad(*on) || !an->requires_grad) return;
      const Matrix& x = an->value;
      const Matrix& y = on->value;
      const Matrix& g = on->grad;
      const double p = act.param;
      switch (act.kind) {
        case ActivationKind::sigmoid:
          accumulate(*an, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
          break;
        case ActivationKind::tanh:
          accumulate(*an, g.cwiseProduct((1.0 - y.array().square()).matrix()));
          break;
        case ActivationKind::relu:
          accumulate(*an, g.cwiseProduct(x.unaryExpr([](double v) { return v >= 0 ? 1.0 : 0.0; })));
          break;
        case ActivationKind::leaky_relu:
          accumulate(*an, g.cwiseProduct(x.unaryExpr([p](double v) { return v >= 0 ? 1.0 : p; })));
          break;
        case ActivationKind::elu:
          accumulate(*an, g.cwiseProduct(x.binaryExpr(
                              y, [p](double v, double out) { return v >= 0 ? 1.0 : out + p; })));
          break;
      }
    });
  }
  return out;
}

Tensor masked_softmax(const Tensor& logits, const Matrix& mask) {
  if (logits.rows() != mask.rows() || logits.cols() != mask.cols())
    throw ShapeError("masked_softmax: incompatible shapes " + logits.shape() + " and mask " + dims(mask));
  const Matrix& x = logits.value();
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0.0) peak = std::max(peak, x(i, j));
    if (peak == -std::numeric_limits<double>::infinity())
      throw std::invalid_argument("masked_softmax: row " + std::to_string(i) + " has no admissible entry");
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0.0) total += (y(i, j) = std::exp(x(i, j) - peak));
    y.row(i) /= total;
  }
  const bool rec = recording({&logits});
  Tensor out = make_output(std::move(y), "masked_softmax", rec);
  if (rec) {
    g_active_tape->record([xn = logits.node(), on = out.node()] {
      if (!has_grad(*on)) return;
      const Matrix& y = on->value;
      const Matrix& g = on->grad;
      const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
      accumulate(*xn, y.cwiseProduct(Matrix(g.colwise() - dot)));
    });
  }
  return out;
}

Tensor outer_sum(const Tensor& col_a, const Tensor& col_b) {
  if (col_a.cols() != 1 || col_b.cols() != 1) shape_mismatch("outer_sum", col_a, col_b);
  const bool rec = recording({&col_a, &col_b});
  Matrix v = col_a.value() * Matrix::Ones(1, col_b.rows()) +
             Matrix::Ones(col_a.rows(), 1) * col_b.value().transpose();
  Tensor out = make_output(std::move(v), "outer_sum", rec);
  if (rec) {
    g_active_tape->record([an = col_a.node(), bn = col_b.node(), on = out.node()] {
      if (!has_grad(*on)) return;
      accumulate(*an, on->grad.rowwise().sum());
      accumulate(*bn, on->grad.colwise().sum().transpose());
    });
  }
  return out;
}

Tensor pairwise_mlp(const Tensor& left, const Tensor& right, const Tensor& b1, const Tensor& w2,
                    const Tensor& b2) {
  const Eigen::Index d = left.cols();
  if (right.cols() != d) shape_mismatch("pairwise_mlp", left, right);
  if (b1.rows() != 1 || b1.cols() != d) shape_mismatch("pairwise_mlp(b1)", left, b1);
  if (w2.rows() != 1 || w2.cols() != d) shape_mismatch("pairwise_mlp(w2)", left, w2);
  if (b2.rows() != 1 || b2.cols() != 1) shape_mismatch("pairwise_mlp(b2)", left, b2);
  const Eigen::Index n = left.rows();
  const Eigen::Index m = right.rows();
  Matrix v(n, m);
  {
    const Eigen::VectorXd w = w2.value().row(0).transpose();
    Matrix pre(m, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::RowVectorXd shift = left.value().row(i) + b1.value().row(0);
      pre = right.value().rowwise() + shift;
      v.row(i) = (pre.cwiseMax(0.0) * w).transpose().array() + b2.value()(0, 0);
    }
  }
  const bool rec = recording({&left, &right, &b1, &w2, &b2});
  Tensor out = make_output(std::move(v), "pairwise_mlp", rec);
  if (rec) {
    g_active_tape->record([ln = left.node(), rn = right.node(), b1n = b1.node(), w2n = w2.node(),
                           b2n = b2.node(), on = out.node()] {
      if (!has_grad(*on)) return;
      const Matrix& g = on->grad;
      const Eigen::Index n = ln->value.rows();
      const Eigen::Index m = rn->value.rows();
      const Eigen::Index d = ln->value.cols();
      Matrix d_left = Matrix::Zero(n, d);
      Matrix d_right = Matrix::Zero(m, d);
      Eigen::RowVectorXd d_w2 = Eigen::RowVectorXd::Zero(d);
      const Eigen::RowVectorXd w = w2n->value.row(0);
      Matrix pre(m, d);
      Matrix gate(m, d);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::RowVectorXd shift = ln->value.row(i) + b1n->value.row(0);
        pre = rn->value.rowwise() + shift;
        d_w2.noalias() += g.row(i) * pre.cwiseMax(0.0);
        // d pre(j, k) = g(i, j) * w(k) on the active side of the kink.
        gate = pre.unaryExpr([](double x) { return x >= 0 ? 1.0 : 0.0; });
        gate.array().colwise() *= g.row(i).transpose().array();
        gate.array().rowwise() *= w.array();
        d_left.row(i) = gate.colwise().sum();
        d_right += gate;
      }
      if (ln->requires_grad) accumulate(*ln, d_left);
      if (rn->requires_grad) accumulate(*rn, d_right);
      if (b1n->requires_grad) accumulate(*b1n, d_left.colwise().sum());
      if (w2n->requires_grad) accumulate(*w2n, d_w2);
      if (b2n->requires_grad) accumulate(*b2n, Matrix::Constant(1, 1, g.sum()));
    });
  }
  return out;
}

// --- gradient checking -----------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs, double h,
                           double tol) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    backward(f());
  }
  std::vector<Matrix> analytic;
  for (const Tensor& t : inputs) analytic.push_back(t.grad());

  GradCheckReport report;
  NoGradScope no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix& x = inputs[k].mutable_value();
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double original = x(r, c);
        x(r, c) = original + h;
        const double up = f().item();
        x(r, c) = original - h;
        const double down = f().item();
        x(r, c) = original;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[k](r, c);
        const double abs_err = std::abs(a - numeric);
        const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-3});
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        if (rel_err > report.max_rel_error || report.checked == 0) {
          report.max_rel_error = std::max(report.max_rel_error, rel_err);
          report.worst_input = k;
          report.worst_row = r;
          report.worst_col = c;
        }
        ++report.checked;
      }
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace multiflock
