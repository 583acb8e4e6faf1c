#include "leapt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace leapt {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  Node node;
  node.value = std::move(value);
  node.op = "constant";
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(const Param& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  Node node;
  node.ref = &p.value;
  node.param = &p;
  node.op = "param";
  node.needs_grad = record_;
  nodes_.push_back(std::move(node));
  int id = static_cast<int>(nodes_.size()) - 1;
  bound_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn, const char* op) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn), op);
}

Var Tape::push(Matrix value, std::span<const Var> inputs, BackwardFn fn, const char* op) {
  Node node;
  node.value = std::move(value);
  node.op = op;
  if (record_) {
    node.needs_grad = std::any_of(inputs.begin(), inputs.end(), [this](const Var& v) { return nodes_[v.id()].needs_grad; });
    if (node.needs_grad) node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.value;
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

std::string Tape::describe_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Matrix& v = value(static_cast<int>(i));
    if (!v.allFinite()) {
      std::ostringstream os;
      os << "node " << i << " (" << nodes_[i].op;
      if (nodes_[i].param) os << " '" << nodes_[i].param->name << "'";
      os << ", " << v.rows() << "x" << v.cols() << ")";
      return os.str();
    }
  }
  return "no non-finite node found";
}

void Tape::backward(const Var& loss) {
  if (!record_) throw ConfigError("backward() on a non-recording tape");
  const Matrix& lv = loss.value();
  if (lv.rows() != 1 || lv.cols() != 1) throw ConfigError("backward() requires a 1x1 loss");
  if (!std::isfinite(lv(0, 0))) throw NumericalError("non-finite loss; first offending " + describe_non_finite());

  for (Node& n : nodes_) n.grad.resize(0, 0);
  accumulate(loss, Matrix::Ones(1, 1));
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) {
      n.backward(*this, n.grad, value(i));
    } else if (n.param) {
      n.param->grad += n.grad;
    }
  }
}

// ---- operations -----------------------------------------------------------

namespace {

void check_same(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x" << b.cols();
    throw ConfigError(os.str());
  }
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  check_same(a, b, "add");
  return a.tape()->push(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  }, "add");
}

Var operator-(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  return a.tape()->push(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  }, "sub");
}

Var operator-(const Var& a) {
  return a.tape()->push(-a.value(), {a}, [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, -g); }, "neg");
}

Var operator*(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "matmul: inner dimension mismatch " << a.rows() << "x" << a.cols() << " * " << b.rows() << "x" << b.cols();
    throw ConfigError(os.str());
  }
  Matrix out = a.value() * b.value();
  return a.tape()->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate(b, a.value().transpose() * g);
  }, "matmul");
}

Var operator*(double s, const Var& a) {
  return a.tape()->push(s * a.value(), {a}, [a, s](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, s * g); }, "scale");
}

Var add_col(const Var& x, const Var& b) {
  if (b.cols() != 1 || b.rows() != x.rows()) throw ConfigError("add_col: bias must be a column matching rows");
  Matrix out = x.value().colwise() + b.value().col(0);
  return x.tape()->push(std::move(out), {x, b}, [x, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, g);
    if (t.needs_grad(b)) t.accumulate(b, g.rowwise().sum());
  }, "add_col");
}

Var hadamard(const Var& a, const Var& b) {
  check_same(a, b, "hadamard");
  return a.tape()->push(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  }, "hadamard");
}

Var scale_cols(const Var& w, const Var& x) {
  if (w.rows() != 1 || w.cols() != x.cols()) throw ConfigError("scale_cols: weight must be 1 x cols");
  Matrix out = x.value() * w.value().row(0).asDiagonal();
  return x.tape()->push(std::move(out), {w, x}, [w, x](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(w)) t.accumulate(w, g.cwiseProduct(x.value()).colwise().sum());
    if (t.needs_grad(x)) t.accumulate(x, g * w.value().row(0).asDiagonal());
  }, "scale_cols");
}

Var tanh(const Var& x) {
  return x.tape()->push(x.value().array().tanh().matrix(), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  }, "tanh");
}

Var sigmoid(const Var& x) {
  Matrix y = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
  return x.tape()->push(std::move(y), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, (g.array() * y.array() * (1.0 - y.array())).matrix());
  }, "sigmoid");
}

Var relu(const Var& x) {
  return x.tape()->push(x.value().cwiseMax(0.0), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, (x.value().array() > 0.0).select(g, 0.0).matrix());
  }, "relu");
}

Var exp(const Var& x) {
  return x.tape()->push(x.value().array().exp().matrix(), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, g.cwiseProduct(y));
  }, "exp");
}

Var square(const Var& x) {
  return x.tape()->push(x.value().array().square().matrix(), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, (2.0 * g.array() * x.value().array()).matrix());
  }, "square");
}

Var clamp(const Var& x, double lo, double hi) {
  return x.tape()->push(x.value().cwiseMax(lo).cwiseMin(hi), {x}, [x, lo, hi](Tape& t, const Matrix& g, const Matrix&) {
    const auto& v = x.value().array();
    t.accumulate(x, ((v >= lo) && (v <= hi)).select(g, 0.0).matrix());
  }, "clamp");
}

Var vcat(std::initializer_list<Var> parts) { return vcat(std::span<const Var>(parts.begin(), parts.size())); }

Var vcat(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("vcat: no inputs");
  Index cols = parts.front().cols();
  Index total = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ConfigError("vcat: column count mismatch");
    total += p.rows();
  }
  Matrix out(total, cols);
  Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape()->push(std::move(out), parts, [inputs](Tape& t, const Matrix& g, const Matrix&) {
    Index r = 0;
    for (const Var& p : inputs) {
      Index n = p.rows();
      if (t.needs_grad(p)) t.accumulate(p, g.middleRows(r, n));
      r += n;
    }
  }, "vcat");
}

Var rows(const Var& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) throw ConfigError("rows: slice out of range");
  return x.tape()->push(x.value().middleRows(start, count), {x}, [x, start, count](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(x.rows(), x.cols());
    full.middleRows(start, count) = g;
    t.accumulate(x, full);
  }, "rows");
}

Var col(const Var& x, Index j) {
  if (j < 0 || j >= x.cols()) throw ConfigError("col: index out of range");
  return x.tape()->push(x.value().col(j), {x}, [x, j](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(x.rows(), x.cols());
    full.col(j) = g.col(0);
    t.accumulate(x, full);
  }, "col");
}

Var repeat_cols(const Var& x, Index cols) {
  if (x.cols() != 1) throw ConfigError("repeat_cols: input must be a column");
  return x.tape()->push(x.value().replicate(1, cols), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, g.rowwise().sum());
  }, "repeat_cols");
}

Var sum(const Var& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->push(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  }, "sum");
}

Var col_sum(const Var& x) {
  return x.tape()->push(x.value().colwise().sum(), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, g.replicate(x.rows(), 1));
  }, "col_sum");
}

Var softmax_cols(const Var& x) {
  Matrix y = x.value();
  for (Index j = 0; j < y.cols(); ++j) {
    y.col(j).array() -= y.col(j).maxCoeff();
    y.col(j) = y.col(j).array().exp().matrix();
    y.col(j) /= y.col(j).sum();
  }
  return x.tape()->push(std::move(y), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    // d/dx_i = y_i (g_i - sum_j g_j y_j)
    Eigen::RowVectorXd dot = g.cwiseProduct(y).colwise().sum();
    Matrix dx = y.cwiseProduct(g - dot.replicate(y.rows(), 1));
    t.accumulate(x, dx);
  }, "softmax_cols");
}

}  // namespace leapt
