#include "doctest.h"
#include "langdiar/autodiff.hpp"
#include "testutil.hpp"

using namespace langdiar;
using namespace langdiar::testutil;

namespace {

// one-input scalar graph builder
using Builder = std::function<ad::Var(ad::Tape&, ad::Var)>;

GradCheckResult check_unary(const Builder& build, const Mat& x0, double h = 1e-6) {
  std::vector<Mat> inputs{x0};
  auto eval = [&](const std::vector<Mat>& in, std::vector<Mat>* grads) {
    ad::Tape tape;
    ad::Var x = tape.input(in[0], true);
    ad::Var root = build(tape, x);
    double v = tape.val(root)(0, 0);
    if (grads) {
      tape.backward(root);
      grads->clear();
      grads->push_back(tape.grad(x));
    }
    return v;
  };
  return grad_check(inputs, eval, h);
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(11);
  Mat x = random_mat(rng, 4, 5);
  auto sum_of = [](auto op) {
    return [op](ad::Tape& t, ad::Var x) { return t.sum(op(t, x)); };
  };
  CHECK(check_unary(sum_of([](ad::Tape& t, ad::Var x) { return t.sigmoid(x); }), x).fraction() == 1.0);
  CHECK(check_unary(sum_of([](ad::Tape& t, ad::Var x) { return t.gelu(x); }), x).fraction() == 1.0);
  CHECK(check_unary(sum_of([](ad::Tape& t, ad::Var x) { return t.silu(x); }), x).fraction() == 1.0);
  CHECK(check_unary(sum_of([](ad::Tape& t, ad::Var x) { return t.scale(x, -2.5); }), x).fraction() == 1.0);
  CHECK(check_unary(sum_of([](ad::Tape& t, ad::Var x) { return t.add_const(x, 3.0); }), x).fraction() == 1.0);
  CHECK(check_unary(sum_of([](ad::Tape& t, ad::Var x) { return t.mul(x, x); }), x).fraction() == 1.0);

  Mat pos = random_prob(rng, 4, 5, 0.1, 2.0);
  CHECK(check_unary(sum_of([](ad::Tape& t, ad::Var x) { return t.log(x); }), pos).fraction() == 1.0);
  CHECK(check_unary(sum_of([](ad::Tape& t, ad::Var x) { return t.pow(x, 0.75); }), pos).fraction() == 1.0);
  CHECK(check_unary(sum_of([](ad::Tape& t, ad::Var x) { return t.pow(x, -0.5); }), pos).fraction() == 1.0);
}

TEST_CASE("binary ops match finite differences") {
  Rng rng(12);
  Mat a0 = random_mat(rng, 3, 4);
  Mat b0 = random_prob(rng, 3, 4, 0.5, 2.0);
  std::vector<Mat> inputs{a0, b0};
  auto eval = [&](const std::vector<Mat>& in, std::vector<Mat>* grads) {
    ad::Tape t;
    ad::Var a = t.input(in[0], true);
    ad::Var b = t.input(in[1], true);
    ad::Var r = t.sum(t.add(t.div(a, b), t.mul(t.sub(a, b), a)));
    if (grads) {
      t.backward(r);
      *grads = {t.grad(a), t.grad(b)};
    }
    return t.val(r)(0, 0);
  };
  auto res = grad_check(inputs, eval);
  CHECK(res.fraction() == 1.0);
}

TEST_CASE("matmul/transpose/reshape/slices match finite differences") {
  Rng rng(13);
  Mat a0 = random_mat(rng, 4, 3);
  Mat b0 = random_mat(rng, 3, 5);
  std::vector<Mat> inputs{a0, b0};
  auto eval = [&](const std::vector<Mat>& in, std::vector<Mat>* grads) {
    ad::Tape t;
    ad::Var a = t.input(in[0], true);
    ad::Var b = t.input(in[1], true);
    ad::Var m = t.matmul(a, b);                       // 4×5
    ad::Var mt = t.transpose(m);                      // 5×4
    ad::Var rs = t.reshape(mt, 4, 5);                 // 4×5
    ad::Var s1 = t.slice_rows(rs, 1, 2);              // 2×5
    ad::Var s2 = t.slice_cols(rs, 2, 3);              // 4×3
    ad::Var s3 = t.slice_rows_strided(rs, 0, 2, 2);   // 2×5
    ad::Var r = t.add(t.add(t.sum(s1), t.sum(s2)), t.sum(s3));
    if (grads) {
      t.backward(r);
      *grads = {t.grad(a), t.grad(b)};
    }
    return t.val(r)(0, 0);
  };
  CHECK(grad_check(inputs, eval).fraction() == 1.0);
}

TEST_CASE("concat and broadcast ops match finite differences") {
  Rng rng(14);
  Mat a0 = random_mat(rng, 3, 2);
  Mat b0 = random_mat(rng, 3, 2);
  Mat c0 = random_mat(rng, 3, 1);
  Mat d0 = random_mat(rng, 1, 4);
  std::vector<Mat> inputs{a0, b0, c0, d0};
  auto eval = [&](const std::vector<Mat>& in, std::vector<Mat>* grads) {
    ad::Tape t;
    ad::Var a = t.input(in[0], true);
    ad::Var b = t.input(in[1], true);
    ad::Var c = t.input(in[2], true);
    ad::Var d = t.input(in[3], true);
    ad::Var cc = t.concat_cols({a, b});               // 3×4
    ad::Var cr = t.concat_rows({cc, t.bcast_row(d, 2)});  // 5×4
    ad::Var bc = t.bcast_col(c, 4);                   // 3×4
    ad::Var r = t.add(t.sum(t.mul(cc, bc)), t.sum(cr));
    if (grads) {
      t.backward(r);
      *grads = {t.grad(a), t.grad(b), t.grad(c), t.grad(d)};
    }
    return t.val(r)(0, 0);
  };
  CHECK(grad_check(inputs, eval).fraction() == 1.0);
}

TEST_CASE("row_softmax matches finite differences and sums to one") {
  Rng rng(15);
  Mat x0 = random_mat(rng, 4, 6, 2.0);
  {
    ad::Tape t;
    ad::Var s = t.row_softmax(t.input(x0, false));
    for (int i = 0; i < 4; ++i) CHECK(t.val(s).row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  std::vector<Mat> inputs{x0};
  Mat weight = random_mat(rng, 4, 6);
  auto eval = [&](const std::vector<Mat>& in, std::vector<Mat>* grads) {
    ad::Tape t;
    ad::Var x = t.input(in[0], true);
    ad::Var r = t.sum(t.mul(t.row_softmax(x), t.constant(weight)));
    if (grads) {
      t.backward(r);
      *grads = {t.grad(x)};
    }
    return t.val(r)(0, 0);
  };
  CHECK(grad_check(inputs, eval).fraction() == 1.0);
}

TEST_CASE("row_sum, sum, mean, clamp") {
  Rng rng(16);
  Mat x0 = random_mat(rng, 3, 4);
  std::vector<Mat> inputs{x0};
  auto eval = [&](const std::vector<Mat>& in, std::vector<Mat>* grads) {
    ad::Tape t;
    ad::Var x = t.input(in[0], true);
    ad::Var r = t.add(t.mean(t.clamp(x, -0.5, 0.5)), t.sum(t.mul(t.row_sum(x), t.row_sum(x))));
    if (grads) {
      t.backward(r);
      *grads = {t.grad(x)};
    }
    return t.val(r)(0, 0);
  };
  CHECK(grad_check(inputs, eval).fraction() == 1.0);
}

TEST_CASE("im2col matches finite differences") {
  Rng rng(17);
  Mat x0 = random_mat(rng, 12, 3);
  Mat w0 = random_mat(rng, 2 * 3, 4);
  std::vector<Mat> inputs{x0, w0};
  auto eval = [&](const std::vector<Mat>& in, std::vector<Mat>* grads) {
    ad::Tape t;
    ad::Var x = t.input(in[0], true);
    ad::Var w = t.input(in[1], true);
    ad::Var r = t.sum(t.gelu(t.matmul(t.im2col(x, 2, 2), w)));
    if (grads) {
      t.backward(r);
      *grads = {t.grad(x), t.grad(w)};
    }
    return t.val(r)(0, 0);
  };
  CHECK(grad_check(inputs, eval).fraction() == 1.0);
}

TEST_CASE("im2col layout: row t is the flattened window at t*stride") {
  Mat x(5, 2);
  x << 0, 1, 2, 3, 4, 5, 6, 7, 8, 9;
  ad::Tape t;
  ad::Var c = t.im2col(t.constant(x), 3, 2);
  CHECK(t.rows(c) == 2);
  CHECK(t.cols(c) == 6);
  Mat expect(2, 6);
  expect << 0, 1, 2, 3, 4, 5, 4, 5, 6, 7, 8, 9;
  CHECK((t.val(c) - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("depthwise_conv_same matches finite differences and identity kernel") {
  Rng rng(18);
  Mat x0 = random_mat(rng, 9, 4);
  Mat w0 = random_mat(rng, 3, 4);
  std::vector<Mat> inputs{x0, w0};
  auto eval = [&](const std::vector<Mat>& in, std::vector<Mat>* grads) {
    ad::Tape t;
    ad::Var x = t.input(in[0], true);
    ad::Var w = t.input(in[1], true);
    ad::Var r = t.sum(t.sigmoid(t.depthwise_conv_same(x, w)));
    if (grads) {
      t.backward(r);
      *grads = {t.grad(x), t.grad(w)};
    }
    return t.val(r)(0, 0);
  };
  CHECK(grad_check(inputs, eval).fraction() == 1.0);

  // delta kernel reproduces the input
  ad::Tape t;
  Mat w = Mat::Zero(3, 4);
  w.row(1).setOnes();
  ad::Var y = t.depthwise_conv_same(t.constant(x0), t.constant(w));
  CHECK((t.val(y) - x0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rel_pos_bias toeplitz structure and gradient") {
  Rng rng(19);
  Mat table0 = random_mat(rng, 1, 5);  // L = 2
  {
    ad::Tape t;
    ad::Var b = t.rel_pos_bias(t.constant(table0), 4, 4);
    const Mat& bv = t.val(b);
    CHECK(bv(0, 0) == table0(0, 2));
    CHECK(bv(1, 0) == table0(0, 3));
    CHECK(bv(0, 3) == table0(0, 0));  // clamped at -L
    CHECK(bv(3, 0) == table0(0, 4));  // clamped at +L
    CHECK(bv(2, 1) == bv(3, 2));      // constant along diagonals
  }
  std::vector<Mat> inputs{table0};
  Mat weight = random_mat(rng, 6, 6);
  auto eval = [&](const std::vector<Mat>& in, std::vector<Mat>* grads) {
    ad::Tape t;
    ad::Var tb = t.input(in[0], true);
    ad::Var r = t.sum(t.mul(t.row_softmax(t.rel_pos_bias(tb, 6, 6)), t.constant(weight)));
    if (grads) {
      t.backward(r);
      *grads = {t.grad(tb)};
    }
    return t.val(r)(0, 0);
  };
  CHECK(grad_check(inputs, eval).fraction() == 1.0);
}

TEST_CASE("shared subexpressions accumulate gradients") {
  Mat x0(1, 1);
  x0 << 3.0;
  ad::Tape t;
  ad::Var x = t.input(x0, true);
  ad::Var y = t.mul(x, x);        // x^2
  ad::Var r = t.sum(t.add(y, y));  // 2 x^2, d/dx = 4x = 12
  t.backward(r);
  CHECK(t.grad(x)(0, 0) == doctest::Approx(12.0));
}

TEST_CASE("layer-norm style composite matches finite differences") {
  Rng rng(20);
  Mat x0 = random_mat(rng, 5, 8);
  Mat g0 = random_prob(rng, 1, 8, 0.5, 1.5);
  Mat b0 = random_mat(rng, 1, 8, 0.1);
  std::vector<Mat> inputs{x0, g0, b0};
  auto eval = [&](const std::vector<Mat>& in, std::vector<Mat>* grads) {
    ad::Tape t;
    ad::Var x = t.input(in[0], true);
    ad::Var g = t.input(in[1], true);
    ad::Var b = t.input(in[2], true);
    int d = t.cols(x), r = t.rows(x);
    ad::Var mu = t.row_mean(x);
    ad::Var xc = t.sub(x, t.bcast_col(mu, d));
    ad::Var var = t.row_mean(t.mul(xc, xc));
    ad::Var inv = t.pow(t.add_const(var, 1e-5), -0.5);
    ad::Var xn = t.mul(xc, t.bcast_col(inv, d));
    ad::Var out = t.add(t.mul(xn, t.bcast_row(g, r)), t.bcast_row(b, r));
    ad::Var root = t.sum(t.gelu(out));
    if (grads) {
      t.backward(root);
      *grads = {t.grad(x), t.grad(g), t.grad(b)};
    }
    return t.val(root)(0, 0);
  };
  CHECK(grad_check(inputs, eval).fraction() == 1.0);
}

TEST_CASE("dropout is identity at p=0 and scales kept entries") {
  Rng rng(21);
  Mat x0 = random_mat(rng, 6, 6);
  ad::Tape t;
  ad::Var x = t.input(x0, false);
  Rng drop_rng(99);
  ad::Var y = t.dropout(x, 0.0, drop_rng);
  CHECK(y.id == x.id);
  ad::Var z = t.dropout(x, 0.5, drop_rng);
  const Mat& zv = t.val(z);
  for (long i = 0; i < zv.size(); ++i) {
    double v = zv.data()[i];
    bool ok = v == 0.0 || v == doctest::Approx(2.0 * x0.data()[i]);
    CHECK(ok);
  }
}
