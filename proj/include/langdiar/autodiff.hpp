#pragma once

#include "langdiar/common.hpp"

#include <functional>
#include <vector>

namespace langdiar::ad {

// Handle to a node on a Tape. Only meaningful for the tape that created it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense row-major double matrices. Nodes are appended
// in topological order; backward() walks them in reverse. Gradients are
// allocated lazily and accumulated, so shared subexpressions are handled.
class Tape {
 public:
  Var input(Mat value, bool requires_grad = false);
  Var constant(Mat value) { return input(std::move(value), false); }
  Var scalar(double v);

  const Mat& val(Var v) const { return node(v.id).value; }
  // Zero matrix if no gradient flowed into v.
  Mat grad(Var v) const;
  bool requires_grad(Var v) const { return node(v.id).requires_grad; }
  int rows(Var v) const { return static_cast<int>(node(v.id).value.rows()); }
  int cols(Var v) const { return static_cast<int>(node(v.id).value.cols()); }
  size_t size() const { return nodes_.size(); }

  // elementwise
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }
  Var one_minus(Var a) { return add_const(scale(a, -1.0), 1.0); }
  Var sigmoid(Var a);
  Var gelu(Var a);
  Var silu(Var a) { return mul(a, sigmoid(a)); }
  Var log(Var a);
  Var pow(Var a, double p);
  Var clamp(Var a, double lo, double hi);

  // shape / linalg
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var reshape(Var a, int r, int c);  // row-major reinterpretation
  Var slice_rows(Var a, int r0, int count);
  Var slice_cols(Var a, int c0, int count);
  Var slice_rows_strided(Var a, int start, int stride, int count);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var bcast_col(Var v, int cols);  // T×1 -> T×cols
  Var bcast_row(Var v, int rows);  // 1×D -> rows×D
  Var row_sum(Var a);              // T×1
  Var sum(Var a);                  // 1×1
  Var mean(Var a);
  Var row_mean(Var a) { return scale(row_sum(a), 1.0 / cols(a)); }
  Var row_softmax(Var a);

  // structured
  Var im2col(Var x, int kernel, int stride);        // N×C -> T×(kernel*C)
  Var depthwise_conv_same(Var x, Var w);            // x T×D, w k×D, k odd
  Var rel_pos_bias(Var table, int r, int c);        // table 1×(2L+1), B[i][j]=table[clamp(i-j)+L]
  Var dropout(Var a, double p, Rng& rng);

  // root must be 1×1
  void backward(Var root);

 private:
  struct Node {
    Mat value;
    Mat grad;  // empty until touched
    bool requires_grad = false;
    std::function<void(Tape&)> back;  // empty for leaves
  };

  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  Mat& grad_ref(int id);
  Var push(Mat value, bool requires_grad, std::function<void(Tape&)> back);

  std::vector<Node> nodes_;
};

}  // namespace langdiar::ad
