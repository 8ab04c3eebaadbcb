#include "ssmvae/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ssmvae/errors.hpp"

namespace ssmvae::nn {

Matrix exp_exact(const Matrix& a) {
  return a.unaryExpr([](double v) { return std::exp(v); });
}

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

bool broadcastable(Eigen::Index from, Eigen::Index to) { return from == to || from == 1; }

// Result shape of an elementwise binary op, or throws.
std::pair<Eigen::Index, Eigen::Index> broadcast_shape(const Matrix& a, const Matrix& b) {
  const Eigen::Index r = std::max(a.rows(), b.rows());
  const Eigen::Index c = std::max(a.cols(), b.cols());
  if (!broadcastable(a.rows(), r) || !broadcastable(a.cols(), c) ||
      !broadcastable(b.rows(), r) || !broadcastable(b.cols(), c)) {
    throw ContractViolation("elementwise op: cannot broadcast " + shape_str(a) + " with " +
                            shape_str(b));
  }
  return {r, c};
}

Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.rows() == 1 && m.cols() == 1) return Matrix::Constant(rows, cols, m(0, 0));
  if (m.rows() == 1) return m.replicate(rows, 1);
  return m.replicate(1, cols);
}

Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

// Reductions add values in sorted order so results do not depend on the order
// of the reduced elements (class relabelling, modality order).
template <typename Expr>
double sorted_sum(const Expr& e) {
  std::vector<double> v(static_cast<std::size_t>(e.size()));
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < e.cols(); ++j) {
    for (Eigen::Index i = 0; i < e.rows(); ++i) v[static_cast<std::size_t>(k++)] = e(i, j);
  }
  std::sort(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}

Matrix row_sorted_sum(const Matrix& a) {
  Matrix out(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) out(i, 0) = sorted_sum(a.row(i));
  return out;
}

Matrix row_log_softmax(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    const RowVector shifted = exp_exact((x.row(i).array() - mx).matrix());
    const double lse = mx + std::log(sorted_sum(shifted));
    out.row(i) = x.row(i).array() - lse;
  }
  return out;
}

int arity(Op op) {
  switch (op) {
    case Op::kLeaf: return -1;
    case Op::kMatMul:
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: return 2;
    case Op::kConcatCols: return 0;  // variadic
    default: return 1;
  }
}

}  // namespace

const Matrix& Var::value() const {
  if (!tape_) throw ContractViolation("Var: uninitialised handle");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractViolation("Var::scalar on " + shape_str(v) + " value");
  return v(0, 0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::scalar_constant(double v) { return constant(Matrix::Constant(1, 1, v)); }

Var Tape::parameter(const ParamStore& store, const std::string& name) {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return Var(this, it->second);
  Node n;
  n.value = store.at(name);
  n.requires_grad = true;
  n.param_name = name;
  Var v = push(std::move(n));
  param_ids_.emplace(name, v.id());
  return v;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw UnsupportedOp("concat_cols: no inputs");
  Node n;
  n.op = Op::kConcatCols;
  Eigen::Index rows = -1;
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (p.tape() != this) throw UnsupportedOp("concat_cols: input from another tape");
    const Matrix& v = value(p.id());
    if (rows >= 0 && v.rows() != rows) {
      throw ContractViolation("concat_cols: row count mismatch");
    }
    rows = v.rows();
    cols += v.cols();
    n.inputs.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(p.id())].requires_grad;
  }
  n.value.resize(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    const Matrix& v = value(p.id());
    n.value.middleCols(offset, v.cols()) = v;
    offset += v.cols();
  }
  return push(std::move(n));
}

Var Tape::apply(Op op, std::initializer_list<Var> inputs, double attr, int count) {
  const int expected = arity(op);
  if (expected < 0) throw UnsupportedOp("apply: leaves are created with constant()/parameter()");
  if (expected == 0) throw UnsupportedOp("apply: use concat_cols() for variadic concatenation");
  if (static_cast<int>(inputs.size()) != expected) {
    throw UnsupportedOp("apply: op expects " + std::to_string(expected) + " inputs, got " +
                        std::to_string(inputs.size()));
  }
  Node n;
  n.op = op;
  n.attr = attr;
  n.count = count;
  for (Var v : inputs) {
    if (v.tape() != this) throw UnsupportedOp("apply: input belongs to another tape");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(v.id())].requires_grad;
  }
  const Matrix& a = value(n.inputs[0]);
  const Matrix* b = expected == 2 ? &value(n.inputs[1]) : nullptr;

  switch (op) {
    case Op::kMatMul:
      if (a.cols() != b->rows()) {
        throw ContractViolation("matmul: " + shape_str(a) + " times " + shape_str(*b));
      }
      n.value.noalias() = a * *b;
      break;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      const auto [r, c] = broadcast_shape(a, *b);
      const Matrix ea = expand(a, r, c);
      const Matrix eb = expand(*b, r, c);
      if (op == Op::kAdd) n.value = ea + eb;
      if (op == Op::kSub) n.value = ea - eb;
      if (op == Op::kMul) n.value = ea.cwiseProduct(eb);
      if (op == Op::kDiv) n.value = ea.cwiseQuotient(eb);
      break;
    }
    case Op::kNeg: n.value = -a; break;
    case Op::kScale: n.value = a * attr; break;
    case Op::kShift: n.value = a.array() + attr; break;
    case Op::kRelu: n.value = a.cwiseMax(0.0); break;
    case Op::kExp: n.value = exp_exact(a); break;
    case Op::kLog: n.value = a.array().log(); break;
    case Op::kSquare: n.value = a.array().square(); break;
    case Op::kSqrt: n.value = a.array().sqrt(); break;
    case Op::kPow: n.value = a.array().pow(attr); break;
    case Op::kSum: n.value = Matrix::Constant(1, 1, sorted_sum(a)); break;
    case Op::kMean:
      n.value = Matrix::Constant(1, 1, sorted_sum(a) / static_cast<double>(a.size()));
      break;
    case Op::kRowSum: n.value = row_sorted_sum(a); break;
    case Op::kLogSoftmax: n.value = row_log_softmax(a); break;
    case Op::kSoftmax: n.value = exp_exact(row_log_softmax(a)); break;
    case Op::kSliceCols: {
      const int start = static_cast<int>(attr);
      if (start < 0 || count < 0 || start + count > a.cols()) {
        throw ContractViolation("slice_cols: range out of bounds for " + shape_str(a));
      }
      n.value = a.middleCols(start, count);
      break;
    }
    case Op::kLeaf:
    case Op::kConcatCols: throw UnsupportedOp("apply: unreachable op");
  }
  return push(std::move(n));
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw UnsupportedOp("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ContractViolation("backward: loss must be a scalar, got " + shape_str(loss.value()));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  Node& root = nodes_[static_cast<std::size_t>(loss.id())];
  if (!root.requires_grad) return;
  root.grad = Matrix::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op == Op::kLeaf || !n.requires_grad || n.grad.size() == 0) continue;
    backward_node(n);
  }
}

void Tape::backward_node(const Node& n) {
  const Matrix& g = n.grad;
  const int ia = n.inputs[0];
  const Matrix& a = value(ia);
  auto needs = [this](int id) { return nodes_[static_cast<std::size_t>(id)].requires_grad; };

  switch (n.op) {
    case Op::kMatMul: {
      const int ib = n.inputs[1];
      const Matrix& b = value(ib);
      if (needs(ia)) accumulate(ia, g * b.transpose());
      if (needs(ib)) accumulate(ib, a.transpose() * g);
      break;
    }
    case Op::kAdd:
    case Op::kSub: {
      const int ib = n.inputs[1];
      const Matrix& b = value(ib);
      if (needs(ia)) accumulate(ia, reduce_to(g, a.rows(), a.cols()));
      if (needs(ib)) {
        Matrix gb = reduce_to(g, b.rows(), b.cols());
        if (n.op == Op::kSub) gb = -gb;
        accumulate(ib, gb);
      }
      break;
    }
    case Op::kMul: {
      const int ib = n.inputs[1];
      const Matrix& b = value(ib);
      if (needs(ia)) {
        accumulate(ia, reduce_to(g.cwiseProduct(expand(b, g.rows(), g.cols())), a.rows(), a.cols()));
      }
      if (needs(ib)) {
        accumulate(ib, reduce_to(g.cwiseProduct(expand(a, g.rows(), g.cols())), b.rows(), b.cols()));
      }
      break;
    }
    case Op::kDiv: {
      const int ib = n.inputs[1];
      const Matrix& b = value(ib);
      const Matrix eb = expand(b, g.rows(), g.cols());
      if (needs(ia)) accumulate(ia, reduce_to(g.cwiseQuotient(eb), a.rows(), a.cols()));
      if (needs(ib)) {
        // d(a/b)/db = -(a/b)/b
        const Matrix gb = -g.cwiseProduct(n.value).cwiseQuotient(eb);
        accumulate(ib, reduce_to(gb, b.rows(), b.cols()));
      }
      break;
    }
    case Op::kNeg: accumulate(ia, -g); break;
    case Op::kScale: accumulate(ia, g * n.attr); break;
    case Op::kShift: accumulate(ia, g); break;
    case Op::kRelu: accumulate(ia, (a.array() > 0.0).select(g.array(), 0.0).matrix()); break;
    case Op::kExp: accumulate(ia, g.cwiseProduct(n.value)); break;
    case Op::kLog: accumulate(ia, g.cwiseQuotient(a)); break;
    case Op::kSquare: accumulate(ia, 2.0 * g.cwiseProduct(a)); break;
    case Op::kSqrt: accumulate(ia, 0.5 * g.cwiseQuotient(n.value)); break;
    case Op::kPow:
      accumulate(ia, n.attr * g.cwiseProduct(a.array().pow(n.attr - 1.0).matrix()));
      break;
    case Op::kSum: accumulate(ia, Matrix::Constant(a.rows(), a.cols(), g(0, 0))); break;
    case Op::kMean:
      accumulate(ia, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / static_cast<double>(a.size())));
      break;
    case Op::kRowSum: accumulate(ia, g.replicate(1, a.cols())); break;
    case Op::kLogSoftmax: {
      const Matrix soft = exp_exact(n.value);
      const Matrix gsum = g.rowwise().sum();
      accumulate(ia, g - soft.cwiseProduct(gsum.replicate(1, soft.cols())));
      break;
    }
    case Op::kSoftmax: {
      const Matrix inner = g.cwiseProduct(n.value).rowwise().sum();
      accumulate(ia, n.value.cwiseProduct(g - inner.replicate(1, g.cols())));
      break;
    }
    case Op::kConcatCols: {
      Eigen::Index offset = 0;
      for (int id : n.inputs) {
        const Eigen::Index c = value(id).cols();
        if (needs(id)) accumulate(id, g.middleCols(offset, c));
        offset += c;
      }
      break;
    }
    case Op::kSliceCols: {
      Matrix ga = Matrix::Zero(a.rows(), a.cols());
      ga.middleCols(static_cast<Eigen::Index>(n.attr), n.count) = g;
      accumulate(ia, ga);
      break;
    }
    case Op::kLeaf: break;
  }
}

const Matrix& Tape::grad(Var v) const {
  return nodes_.at(static_cast<std::size_t>(v.id())).grad;
}

ParamStore Tape::gradients(const ParamStore& like) const {
  ParamStore out;
  for (const auto& [name, value] : like) {
    auto it = param_ids_.find(name);
    if (it == param_ids_.end()) {
      out.insert(name, Matrix::Zero(value.rows(), value.cols()));
      continue;
    }
    const Node& n = nodes_[static_cast<std::size_t>(it->second)];
    out.insert(name, n.grad.size() == 0 ? Matrix::Zero(value.rows(), value.cols()) : n.grad);
  }
  return out;
}

namespace {
Tape& tape_of(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw UnsupportedOp("operator: operands must live on the same tape");
  }
  return *a.tape();
}
Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw UnsupportedOp("operator: uninitialised operand");
  return *a.tape();
}
}  // namespace

Var operator+(Var a, Var b) { return tape_of(a, b).add(a, b); }
Var operator-(Var a, Var b) { return tape_of(a, b).sub(a, b); }
Var operator*(Var a, Var b) { return tape_of(a, b).mul(a, b); }
Var operator/(Var a, Var b) { return tape_of(a, b).div(a, b); }
Var operator-(Var a) { return tape_of(a).neg(a); }
Var operator*(Var a, double s) { return tape_of(a).scale(a, s); }
Var operator*(double s, Var a) { return tape_of(a).scale(a, s); }
Var operator+(Var a, double s) { return tape_of(a).shift(a, s); }
Var operator-(Var a, double s) { return tape_of(a).shift(a, -s); }

}  // namespace ssmvae::nn
