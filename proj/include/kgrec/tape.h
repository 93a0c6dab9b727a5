#pragma once

// Reverse-mode differentiation over a fixed set of matrix primitives.
//
// Nodes are appended in evaluation order, so the node list is already a
// topological order; backward() walks it once in reverse. Values of leaf
// nodes may reference external storage (parameter tables) to avoid copies.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "kgrec/graphstore.h"
#include "kgrec/tensor.h"

namespace kgrec {

struct Var {
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

class Tape {
 public:
  // Receives the node's output value and gradient; accumulates into parents
  // through grad_of().
  using Backward = std::function<void(Tape&, const Matrix& out, const Matrix& out_grad)>;

  Var leaf(Matrix value, bool requires_grad);
  // `value` must outlive the tape.
  Var leaf_ref(const Matrix& value, bool requires_grad);
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  Var scalar(double v) { return constant(Matrix(1, 1, v)); }

  Var record(Matrix value, const std::vector<Var>& parents, Backward backward);

  const Matrix& value(Var v) const;
  double item(Var v) const;  // value of a 1x1 node
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient buffer of v, allocated as zeros on first use.
  Matrix& grad_of(Var v);
  // Empty matrix when no gradient reached v.
  const Matrix& grad(Var v) const { return nodes_.at(v.id).grad; }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward in reverse order.
  void backward(Var loss);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

enum class SegmentReduce { kSum, kMean };

// Plain kernels. `offsets` has one more entry than there are segments.
std::vector<double> segment_softmax(std::span<const double> scores, std::span<const std::size_t> offsets);
Matrix segment_weighted_sum(const Matrix& values, std::span<const double> weights,
                            std::span<const std::size_t> offsets, SegmentReduce reduce);
inline Matrix segment_weighted_mean(const Matrix& values, std::span<const double> weights,
                                    std::span<const std::size_t> offsets) {
  return segment_weighted_sum(values, weights, offsets, SegmentReduce::kMean);
}
// (e_h Wq) . (e_t Wk (*) e_r) / sqrt(d) for row vectors e_h, e_r, e_t.
double bilinear_attention(std::span<const double> e_h, std::span<const double> e_r, std::span<const double> e_t,
                          const Matrix& wq, const Matrix& wk);
Matrix matmul(const Matrix& a, const Matrix& b);

namespace ops {

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double c);
Var add_scalar(Tape& t, Var a, double c);
Var add_row_bias(Tape& t, Var a, Var bias);  // bias is 1 x cols
Var sigmoid(Tape& t, Var a);
Var log_sigmoid(Tape& t, Var a);
Var gather_rows(Tape& t, Var a, std::vector<Index> rows);
Var slice_rows(Tape& t, Var a, std::size_t begin, std::size_t count);
Var row_sum(Tape& t, Var a);
Var row_dot(Tape& t, Var a, Var b);
Var sum(Tape& t, Var a);
Var l2_normalize_rows(Tape& t, Var a, double eps = 1e-12);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var row_logsumexp(Tape& t, Var a);
Var segment_softmax(Tape& t, Var scores, std::vector<std::size_t> offsets);
Var segment_weighted_sum(Tape& t, Var values, Var weights, std::vector<std::size_t> offsets,
                         SegmentReduce reduce);

}  // namespace ops
}  // namespace kgrec
