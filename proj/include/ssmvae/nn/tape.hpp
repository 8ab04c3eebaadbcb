#pragma once

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <deque>
#include <unordered_map>
#include <vector>

#include "ssmvae/nn/param_store.hpp"
#include "ssmvae/types.hpp"

namespace ssmvae::nn {

class Tape;

/// Elementwise std::exp. Eigen's vectorised exp does not underflow to zero
/// below about -708, so probabilities use this instead.
Matrix exp_exact(const Matrix& a);

/// Primitive operations the reverse-mode engine knows how to differentiate.
/// Elementwise binary ops broadcast a 1x1, n x 1 or 1 x m operand.
enum class Op {
  kLeaf,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kScale,  // x * attr
  kShift,  // x + attr
  kRelu,
  kExp,
  kLog,
  kSquare,
  kSqrt,
  kPow,  // x ^ attr
  kSum,
  kMean,
  kRowSum,
  kLogSoftmax,  // row-wise
  kSoftmax,     // row-wise
  kConcatCols,
  kSliceCols,  // columns [attr, attr + count)
};

class UnsupportedOp : public std::logic_error {
 public:
  explicit UnsupportedOp(const std::string& what) : std::logic_error(what) {}
};

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records a computation as it executes and replays it backwards.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var scalar_constant(double v);
  /// Leaf bound to `store.at(name)`; repeated calls return the same node.
  Var parameter(const ParamStore& store, const std::string& name);

  /// Generic entry point. Throws UnsupportedOp for ops that cannot be built
  /// from these inputs (wrong arity, leaf kind, foreign tape).
  Var apply(Op op, std::initializer_list<Var> inputs, double attr = 0.0, int count = 0);

  Var matmul(Var a, Var b) { return apply(Op::kMatMul, {a, b}); }
  Var add(Var a, Var b) { return apply(Op::kAdd, {a, b}); }
  Var sub(Var a, Var b) { return apply(Op::kSub, {a, b}); }
  Var mul(Var a, Var b) { return apply(Op::kMul, {a, b}); }
  Var div(Var a, Var b) { return apply(Op::kDiv, {a, b}); }
  Var neg(Var a) { return apply(Op::kNeg, {a}); }
  Var scale(Var a, double s) { return apply(Op::kScale, {a}, s); }
  Var shift(Var a, double s) { return apply(Op::kShift, {a}, s); }
  Var relu(Var a) { return apply(Op::kRelu, {a}); }
  Var exp(Var a) { return apply(Op::kExp, {a}); }
  Var log(Var a) { return apply(Op::kLog, {a}); }
  Var square(Var a) { return apply(Op::kSquare, {a}); }
  Var sqrt(Var a) { return apply(Op::kSqrt, {a}); }
  Var pow(Var a, double p) { return apply(Op::kPow, {a}, p); }
  Var sum(Var a) { return apply(Op::kSum, {a}); }
  Var mean(Var a) { return apply(Op::kMean, {a}); }
  Var row_sum(Var a) { return apply(Op::kRowSum, {a}); }
  Var log_softmax(Var a) { return apply(Op::kLogSoftmax, {a}); }
  Var softmax(Var a) { return apply(Op::kSoftmax, {a}); }
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var a, int start, int count) {
    return apply(Op::kSliceCols, {a}, static_cast<double>(start), count);
  }

  /// Accumulates d(loss)/d(node) for every node; `loss` must be 1x1.
  void backward(Var loss);

  /// Gradients of parameter leaves, with zeros for entries of `like` that
  /// the graph never touched.
  ParamStore gradients(const ParamStore& like) const;

  const Matrix& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const Matrix& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<int> inputs;
    double attr = 0.0;
    int count = 0;
    bool requires_grad = false;
    Matrix value;
    Matrix grad;
    std::string param_name;
  };

  Var push(Node node);
  void backward_node(const Node& node);
  void accumulate(int id, const Matrix& g);

  std::deque<Node> nodes_;  // deque keeps earlier values stable on push
  std::unordered_map<std::string, int> param_ids_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator*(Var a, double s);
Var operator*(double s, Var a);
Var operator+(Var a, double s);
Var operator-(Var a, double s);

}  // namespace ssmvae::nn
