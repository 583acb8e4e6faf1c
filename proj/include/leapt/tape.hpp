// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// Values are column-batched: a vector quantity for a batch of B samples is a
// (dim x B) matrix. A Tape records every operation; backward() walks the
// recording in reverse and accumulates gradients into the bound Params.
#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace leapt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A named learnable tensor. `grad` is an accumulation buffer written by
/// Tape::backward and cleared by the optimizer.
struct Param {
  Param(std::string name, Matrix value)
      : name(std::move(name)), value(std::move(value)), grad(Matrix::Zero(this->value.rows(), this->value.cols())) {}

  std::string name;
  Matrix value;
  mutable Matrix grad;

  void zero_grad() const { grad.setZero(); }
};

using ParamList = std::vector<Param*>;

class Tape;

/// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Receives the gradient of the loss w.r.t. this node and the node's own value.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out, const Matrix& out)>;

  /// A non-recording tape evaluates values only; used for inference.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Binds a parameter; repeated calls with the same Param return the same node.
  Var param(const Param& p);

  Var push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn, const char* op);
  Var push(Matrix value, std::span<const Var> inputs, BackwardFn fn, const char* op);

  const Matrix& value(int id) const;
  bool needs_grad(const Var& v) const { return record_ && nodes_[v.id()].needs_grad; }
  void accumulate(const Var& v, const Matrix& g);

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1 and finite.
  void backward(const Var& loss);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    BackwardFn backward;
    const Param* param = nullptr;
    const char* op = "";
    bool needs_grad = false;
  };

  std::string describe_non_finite() const;

  std::deque<Node> nodes_;
  std::unordered_map<const Param*, int> bound_;
  bool record_;
};

// ---- operations -----------------------------------------------------------

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
/// Matrix product.
Var operator*(const Var& a, const Var& b);
Var operator*(double s, const Var& a);

/// x (n x B) plus column vector b (n x 1) broadcast over columns.
Var add_col(const Var& x, const Var& b);
/// Elementwise product.
Var hadamard(const Var& a, const Var& b);
/// Row vector w (1 x B) scaling each column of x (n x B).
Var scale_cols(const Var& w, const Var& x);

Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var relu(const Var& x);
Var exp(const Var& x);
Var square(const Var& x);
/// Elementwise clamp; gradient is zero where the bound is active.
Var clamp(const Var& x, double lo, double hi);

Var vcat(std::span<const Var> parts);
Var vcat(std::initializer_list<Var> parts);
Var rows(const Var& x, Index start, Index count);
Var col(const Var& x, Index j);
/// Replicates a column vector (n x 1) into n x cols.
Var repeat_cols(const Var& x, Index cols);

/// Sum of all entries (1 x 1).
Var sum(const Var& x);
/// Sum over rows per column (1 x B).
Var col_sum(const Var& x);
/// Softmax over rows independently for each column.
Var softmax_cols(const Var& x);

}  // namespace leapt
