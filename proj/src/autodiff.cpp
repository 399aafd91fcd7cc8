#include "langdiar/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace langdiar::ad {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(strfmt("%s: shape mismatch %ldx%ld vs %ldx%ld", op, a.rows(), a.cols(), b.rows(),
                b.cols()));
  }
}

}  // namespace

Var Tape::push(Mat value, bool requires_grad, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Mat value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

Var Tape::scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return input(std::move(m), false);
}

Mat& Tape::grad_ref(int id) {
  Node& n = node(id);
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Mat Tape::grad(Var v) const {
  const Node& n = node(v.id);
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  const Node& r = node(root.id);
  if (r.value.rows() != 1 || r.value.cols() != 1) fail("backward: root must be scalar");
  grad_ref(root.id)(0, 0) = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = node(id);
    if (!n.requires_grad || !n.back) continue;
    if (n.grad.size() == 0) continue;  // no gradient reached this node
    n.back(*this);
  }
}

// ---- elementwise ----

Var Tape::add(Var a, Var b) {
  check_same_shape(val(a), val(b), "add");
  bool rg = requires_grad(a) || requires_grad(b);
  Mat out = val(a) + val(b);
  Var o = push(std::move(out), rg, nullptr);
  int ia = a.id, ib = b.id, io = o.id;
  node(io).back = [ia, ib, io](Tape& t) {
    const Mat& g = t.node(io).grad;
    if (t.node(ia).requires_grad) t.grad_ref(ia) += g;
    if (t.node(ib).requires_grad) t.grad_ref(ib) += g;
  };
  return o;
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(val(a), val(b), "sub");
  bool rg = requires_grad(a) || requires_grad(b);
  Mat out = val(a) - val(b);
  Var o = push(std::move(out), rg, nullptr);
  int ia = a.id, ib = b.id, io = o.id;
  node(io).back = [ia, ib, io](Tape& t) {
    const Mat& g = t.node(io).grad;
    if (t.node(ia).requires_grad) t.grad_ref(ia) += g;
    if (t.node(ib).requires_grad) t.grad_ref(ib) -= g;
  };
  return o;
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(val(a), val(b), "mul");
  bool rg = requires_grad(a) || requires_grad(b);
  Mat out = val(a).cwiseProduct(val(b));
  Var o = push(std::move(out), rg, nullptr);
  int ia = a.id, ib = b.id, io = o.id;
  node(io).back = [ia, ib, io](Tape& t) {
    const Mat& g = t.node(io).grad;
    if (t.node(ia).requires_grad) t.grad_ref(ia) += g.cwiseProduct(t.node(ib).value);
    if (t.node(ib).requires_grad) t.grad_ref(ib) += g.cwiseProduct(t.node(ia).value);
  };
  return o;
}

Var Tape::div(Var a, Var b) {
  check_same_shape(val(a), val(b), "div");
  bool rg = requires_grad(a) || requires_grad(b);
  Mat out = val(a).cwiseQuotient(val(b));
  Var o = push(std::move(out), rg, nullptr);
  int ia = a.id, ib = b.id, io = o.id;
  node(io).back = [ia, ib, io](Tape& t) {
    const Mat& g = t.node(io).grad;
    const Mat& bv = t.node(ib).value;
    if (t.node(ia).requires_grad) t.grad_ref(ia) += g.cwiseQuotient(bv);
    if (t.node(ib).requires_grad)
      t.grad_ref(ib) -= g.cwiseProduct(t.node(ia).value).cwiseQuotient(bv.cwiseProduct(bv));
  };
  return o;
}

Var Tape::scale(Var a, double c) {
  Mat out = val(a) * c;
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io, c](Tape& t) {
    if (t.node(ia).requires_grad) t.grad_ref(ia) += t.node(io).grad * c;
  };
  return o;
}

Var Tape::add_const(Var a, double c) {
  Mat out = val(a).array() + c;
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io](Tape& t) {
    if (t.node(ia).requires_grad) t.grad_ref(ia) += t.node(io).grad;
  };
  return o;
}

Var Tape::sigmoid(Var a) {
  Mat out = val(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io](Tape& t) {
    if (!t.node(ia).requires_grad) return;
    const Mat& s = t.node(io).value;
    t.grad_ref(ia) +=
        t.node(io).grad.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
  };
  return o;
}

Var Tape::gelu(Var a) {
  Mat out = val(a).unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io](Tape& t) {
    if (!t.node(ia).requires_grad) return;
    const Mat& x = t.node(ia).value;
    Mat d = x.unaryExpr([](double v) {
      double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      return phi + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
    });
    t.grad_ref(ia) += t.node(io).grad.cwiseProduct(d);
  };
  return o;
}

Var Tape::log(Var a) {
  Mat out = val(a).array().log();
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io](Tape& t) {
    if (t.node(ia).requires_grad)
      t.grad_ref(ia) += t.node(io).grad.cwiseQuotient(t.node(ia).value);
  };
  return o;
}

Var Tape::pow(Var a, double p) {
  Mat out = val(a).unaryExpr([p](double x) { return std::pow(x, p); });
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io, p](Tape& t) {
    if (!t.node(ia).requires_grad) return;
    Mat d = t.node(ia).value.unaryExpr([p](double x) { return p * std::pow(x, p - 1.0); });
    t.grad_ref(ia) += t.node(io).grad.cwiseProduct(d);
  };
  return o;
}

Var Tape::clamp(Var a, double lo, double hi) {
  Mat out = val(a).unaryExpr([lo, hi](double x) { return std::min(hi, std::max(lo, x)); });
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io, lo, hi](Tape& t) {
    if (!t.node(ia).requires_grad) return;
    const Mat& x = t.node(ia).value;
    const Mat& g = t.node(io).grad;
    Mat masked = (x.array() > lo && x.array() < hi).select(g, Mat::Zero(g.rows(), g.cols()));
    t.grad_ref(ia) += masked;
  };
  return o;
}

// ---- shape / linalg ----

Var Tape::matmul(Var a, Var b) {
  if (val(a).cols() != val(b).rows())
    fail(strfmt("matmul: inner dims %ld vs %ld", val(a).cols(), val(b).rows()));
  bool rg = requires_grad(a) || requires_grad(b);
  Mat out = val(a) * val(b);
  Var o = push(std::move(out), rg, nullptr);
  int ia = a.id, ib = b.id, io = o.id;
  node(io).back = [ia, ib, io](Tape& t) {
    const Mat& g = t.node(io).grad;
    if (t.node(ia).requires_grad) t.grad_ref(ia) += g * t.node(ib).value.transpose();
    if (t.node(ib).requires_grad) t.grad_ref(ib) += t.node(ia).value.transpose() * g;
  };
  return o;
}

Var Tape::transpose(Var a) {
  Mat out = val(a).transpose();
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io](Tape& t) {
    if (t.node(ia).requires_grad) t.grad_ref(ia) += t.node(io).grad.transpose();
  };
  return o;
}

Var Tape::reshape(Var a, int r, int c) {
  const Mat& v = val(a);
  if (static_cast<long>(r) * c != v.size())
    fail(strfmt("reshape: %ldx%ld -> %dx%d", v.rows(), v.cols(), r, c));
  Mat out = Eigen::Map<const Mat>(v.data(), r, c);
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io](Tape& t) {
    if (!t.node(ia).requires_grad) return;
    const Mat& g = t.node(io).grad;
    const Mat& src = t.node(ia).value;
    t.grad_ref(ia) +=
        Eigen::Map<const Mat>(g.data(), src.rows(), src.cols());
  };
  return o;
}

Var Tape::slice_rows(Var a, int r0, int count) {
  const Mat& v = val(a);
  if (r0 < 0 || count < 0 || r0 + count > v.rows())
    fail(strfmt("slice_rows: [%d,%d) of %ld", r0, r0 + count, v.rows()));
  Mat out = v.middleRows(r0, count);
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io, r0, count](Tape& t) {
    if (t.node(ia).requires_grad)
      t.grad_ref(ia).middleRows(r0, count) += t.node(io).grad;
  };
  return o;
}

Var Tape::slice_cols(Var a, int c0, int count) {
  const Mat& v = val(a);
  if (c0 < 0 || count < 0 || c0 + count > v.cols())
    fail(strfmt("slice_cols: [%d,%d) of %ld", c0, c0 + count, v.cols()));
  Mat out = v.middleCols(c0, count);
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io, c0, count](Tape& t) {
    if (t.node(ia).requires_grad)
      t.grad_ref(ia).middleCols(c0, count) += t.node(io).grad;
  };
  return o;
}

Var Tape::slice_rows_strided(Var a, int start, int stride, int count) {
  const Mat& v = val(a);
  if (start < 0 || stride < 1 || count < 0 || start + (count - 1) * stride >= v.rows())
    fail("slice_rows_strided: out of range");
  Mat out(count, v.cols());
  for (int i = 0; i < count; ++i) out.row(i) = v.row(start + i * stride);
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io, start, stride, count](Tape& t) {
    if (!t.node(ia).requires_grad) return;
    Mat& ga = t.grad_ref(ia);
    const Mat& g = t.node(io).grad;
    for (int i = 0; i < count; ++i) ga.row(start + i * stride) += g.row(i);
  };
  return o;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) fail("concat_rows: empty");
  long cols = val(parts[0]).cols();
  long rows = 0;
  bool rg = false;
  for (Var p : parts) {
    if (val(p).cols() != cols) fail("concat_rows: column mismatch");
    rows += val(p).rows();
    rg = rg || requires_grad(p);
  }
  Mat out(rows, cols);
  long r = 0;
  for (Var p : parts) {
    out.middleRows(r, val(p).rows()) = val(p);
    r += val(p).rows();
  }
  Var o = push(std::move(out), rg, nullptr);
  std::vector<int> ids;
  for (Var p : parts) ids.push_back(p.id);
  int io = o.id;
  node(io).back = [ids, io](Tape& t) {
    const Mat& g = t.node(io).grad;
    long r = 0;
    for (int id : ids) {
      long n = t.node(id).value.rows();
      if (t.node(id).requires_grad) t.grad_ref(id) += g.middleRows(r, n);
      r += n;
    }
  };
  return o;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) fail("concat_cols: empty");
  long rows = val(parts[0]).rows();
  long cols = 0;
  bool rg = false;
  for (Var p : parts) {
    if (val(p).rows() != rows) fail("concat_cols: row mismatch");
    cols += val(p).cols();
    rg = rg || requires_grad(p);
  }
  Mat out(rows, cols);
  long c = 0;
  for (Var p : parts) {
    out.middleCols(c, val(p).cols()) = val(p);
    c += val(p).cols();
  }
  Var o = push(std::move(out), rg, nullptr);
  std::vector<int> ids;
  for (Var p : parts) ids.push_back(p.id);
  int io = o.id;
  node(io).back = [ids, io](Tape& t) {
    const Mat& g = t.node(io).grad;
    long c = 0;
    for (int id : ids) {
      long n = t.node(id).value.cols();
      if (t.node(id).requires_grad) t.grad_ref(id) += g.middleCols(c, n);
      c += n;
    }
  };
  return o;
}

Var Tape::bcast_col(Var v, int cols) {
  const Mat& x = val(v);
  if (x.cols() != 1) fail("bcast_col: input must be T×1");
  Mat out = x.replicate(1, cols);
  Var o = push(std::move(out), requires_grad(v), nullptr);
  int ia = v.id, io = o.id;
  node(io).back = [ia, io](Tape& t) {
    if (t.node(ia).requires_grad) t.grad_ref(ia) += t.node(io).grad.rowwise().sum();
  };
  return o;
}

Var Tape::bcast_row(Var v, int rows) {
  const Mat& x = val(v);
  if (x.rows() != 1) fail("bcast_row: input must be 1×D");
  Mat out = x.replicate(rows, 1);
  Var o = push(std::move(out), requires_grad(v), nullptr);
  int ia = v.id, io = o.id;
  node(io).back = [ia, io](Tape& t) {
    if (t.node(ia).requires_grad)
      t.grad_ref(ia) += t.node(io).grad.colwise().sum();
  };
  return o;
}

Var Tape::row_sum(Var a) {
  Mat out = val(a).rowwise().sum();
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io](Tape& t) {
    if (!t.node(ia).requires_grad) return;
    const Mat& g = t.node(io).grad;  // T×1
    t.grad_ref(ia) += g.replicate(1, t.node(ia).value.cols());
  };
  return o;
}

Var Tape::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = val(a).sum();
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io](Tape& t) {
    if (t.node(ia).requires_grad) t.grad_ref(ia).array() += t.node(io).grad(0, 0);
  };
  return o;
}

Var Tape::mean(Var a) {
  long n = val(a).size();
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var Tape::row_softmax(Var a) {
  const Mat& x = val(a);
  Mat out(x.rows(), x.cols());
  // scalar std::exp underflows to exact +0 for strongly masked logits;
  // Eigen's vectorized exp clamps and would leave denormals behind
  for (long i = 0; i < x.rows(); ++i) {
    double m = x.row(i).maxCoeff();
    double z = 0.0;
    for (long j = 0; j < x.cols(); ++j) {
      double e = std::exp(x(i, j) - m);
      out(i, j) = e;
      z += e;
    }
    out.row(i) /= z;
  }
  Var o = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, io = o.id;
  node(io).back = [ia, io](Tape& t) {
    if (!t.node(ia).requires_grad) return;
    const Mat& s = t.node(io).value;
    const Mat& g = t.node(io).grad;
    Mat gs = g.cwiseProduct(s);
    Eigen::VectorXd dot = gs.rowwise().sum();
    Mat d = gs - s.cwiseProduct(dot.replicate(1, s.cols()));
    t.grad_ref(ia) += d;
  };
  return o;
}

// ---- structured ----

Var Tape::im2col(Var x, int kernel, int stride) {
  const Mat& v = val(x);
  long n = v.rows(), c = v.cols();
  if (kernel < 1 || stride < 1) fail("im2col: bad kernel/stride");
  if (n < kernel) fail(strfmt("im2col: input length %ld < kernel %d", n, kernel));
  long t_out = (n - kernel) / stride + 1;
  Mat out(t_out, static_cast<long>(kernel) * c);
  for (long t = 0; t < t_out; ++t)
    for (int j = 0; j < kernel; ++j)
      out.block(t, static_cast<long>(j) * c, 1, c) = v.row(t * stride + j);
  Var o = push(std::move(out), requires_grad(x), nullptr);
  int ia = x.id, io = o.id;
  node(io).back = [ia, io, kernel, stride, c](Tape& t) {
    if (!t.node(ia).requires_grad) return;
    Mat& ga = t.grad_ref(ia);
    const Mat& g = t.node(io).grad;
    for (long ti = 0; ti < g.rows(); ++ti)
      for (int j = 0; j < kernel; ++j)
        ga.row(ti * stride + j) += g.block(ti, static_cast<long>(j) * c, 1, c);
  };
  return o;
}

Var Tape::depthwise_conv_same(Var x, Var w) {
  const Mat& xv = val(x);
  const Mat& wv = val(w);
  long tlen = xv.rows(), d = xv.cols();
  int k = static_cast<int>(wv.rows());
  if (wv.cols() != d) fail("depthwise_conv_same: channel mismatch");
  if (k % 2 == 0) fail("depthwise_conv_same: kernel must be odd");
  int pad = (k - 1) / 2;
  Mat out = Mat::Zero(tlen, d);
  for (long t = 0; t < tlen; ++t)
    for (int j = 0; j < k; ++j) {
      long src = t + j - pad;
      if (src < 0 || src >= tlen) continue;
      out.row(t) += xv.row(src).cwiseProduct(wv.row(j));
    }
  bool rg = requires_grad(x) || requires_grad(w);
  Var o = push(std::move(out), rg, nullptr);
  int ix = x.id, iw = w.id, io = o.id;
  node(io).back = [ix, iw, io, k, pad](Tape& t) {
    const Mat& g = t.node(io).grad;
    const Mat& xv2 = t.node(ix).value;
    const Mat& wv2 = t.node(iw).value;
    long tlen2 = xv2.rows();
    if (t.node(ix).requires_grad) {
      Mat& gx = t.grad_ref(ix);
      for (long ti = 0; ti < tlen2; ++ti)
        for (int j = 0; j < k; ++j) {
          long src = ti + j - pad;
          if (src < 0 || src >= tlen2) continue;
          gx.row(src) += g.row(ti).cwiseProduct(wv2.row(j));
        }
    }
    if (t.node(iw).requires_grad) {
      Mat& gw = t.grad_ref(iw);
      for (long ti = 0; ti < tlen2; ++ti)
        for (int j = 0; j < k; ++j) {
          long src = ti + j - pad;
          if (src < 0 || src >= tlen2) continue;
          gw.row(j) += g.row(ti).cwiseProduct(xv2.row(src));
        }
    }
  };
  return o;
}

Var Tape::rel_pos_bias(Var table, int r, int c) {
  const Mat& tv = val(table);
  if (tv.rows() != 1 || tv.cols() % 2 == 0) fail("rel_pos_bias: table must be 1×(2L+1)");
  int L = static_cast<int>(tv.cols() / 2);
  Mat out(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      int d = std::clamp(i - j, -L, L);
      out(i, j) = tv(0, d + L);
    }
  Var o = push(std::move(out), requires_grad(table), nullptr);
  int it = table.id, io = o.id;
  node(io).back = [it, io, L](Tape& t) {
    if (!t.node(it).requires_grad) return;
    Mat& gt = t.grad_ref(it);
    const Mat& g = t.node(io).grad;
    for (long i = 0; i < g.rows(); ++i)
      for (long j = 0; j < g.cols(); ++j) {
        int d = std::clamp(static_cast<int>(i - j), -L, L);
        gt(0, d + L) += g(i, j);
      }
  };
  return o;
}

Var Tape::dropout(Var a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) fail("dropout: p must be < 1");
  const Mat& v = val(a);
  Mat mask(v.rows(), v.cols());
  double keep = 1.0 - p;
  for (long i = 0; i < v.rows(); ++i)
    for (long j = 0; j < v.cols(); ++j) mask(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(a, constant(std::move(mask)));
}

}  // namespace langdiar::ad
