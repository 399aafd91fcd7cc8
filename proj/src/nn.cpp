#include "langdiar/nn.hpp"

#include <cmath>

namespace langdiar::nn {

Mat& ParamStore::create(const std::string& name, int rows, int cols) {
  if (has(name)) fail(strfmt("ParamStore: duplicate parameter '%s'", name.c_str()));
  names_.push_back(name);
  values_[name] = Mat::Zero(rows, cols);
  return values_[name];
}

Mat& ParamStore::at(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) fail(strfmt("ParamStore: unknown parameter '%s'", name.c_str()));
  return it->second;
}

const Mat& ParamStore::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) fail(strfmt("ParamStore: unknown parameter '%s'", name.c_str()));
  return it->second;
}

size_t ParamStore::total_size() const {
  size_t n = 0;
  for (const auto& name : names_) n += static_cast<size_t>(values_.at(name).size());
  return n;
}

ad::Var Bound::operator[](const std::string& name) {
  auto it = vars_.find(name);
  if (it != vars_.end()) return it->second;
  ad::Var v = tape_->input(store_->at(name), requires_grad_);
  vars_[name] = v;
  return v;
}

Mat Bound::grad_of(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) {
    const Mat& v = store_->at(name);
    return Mat::Zero(v.rows(), v.cols());
  }
  return tape_->grad(it->second);
}

void init_xavier(Rng& rng, Mat& w) {
  double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (long i = 0; i < w.rows(); ++i)
    for (long j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
}

void init_normal(Rng& rng, Mat& w, double stddev) {
  for (long i = 0; i < w.rows(); ++i)
    for (long j = 0; j < w.cols(); ++j) w(i, j) = rng.normal() * stddev;
}

void create_linear(ParamStore& s, Rng& rng, const std::string& prefix, int in, int out,
                   bool zero) {
  Mat& w = s.create(prefix + ".w", in, out);
  if (!zero) init_xavier(rng, w);
  s.create(prefix + ".b", 1, out);
}

ad::Var linear(ad::Tape& t, Bound& p, const std::string& prefix, ad::Var x) {
  ad::Var w = p[prefix + ".w"];
  ad::Var b = p[prefix + ".b"];
  return t.add(t.matmul(x, w), t.bcast_row(b, t.rows(x)));
}

void create_layer_norm(ParamStore& s, const std::string& prefix, int dim) {
  s.create(prefix + ".g", 1, dim).setOnes();
  s.create(prefix + ".b", 1, dim);
}

ad::Var layer_norm(ad::Tape& t, Bound& p, const std::string& prefix, ad::Var x, double eps) {
  int d = t.cols(x), r = t.rows(x);
  ad::Var mu = t.row_mean(x);
  ad::Var xc = t.sub(x, t.bcast_col(mu, d));
  ad::Var var = t.row_mean(t.mul(xc, xc));
  ad::Var inv = t.pow(t.add_const(var, eps), -0.5);
  ad::Var xn = t.mul(xc, t.bcast_col(inv, d));
  return t.add(t.mul(xn, t.bcast_row(p[prefix + ".g"], r)), t.bcast_row(p[prefix + ".b"], r));
}

void create_mha(ParamStore& s, Rng& rng, const std::string& prefix, int d_model) {
  create_linear(s, rng, prefix + ".q", d_model, d_model);
  create_linear(s, rng, prefix + ".k", d_model, d_model);
  create_linear(s, rng, prefix + ".v", d_model, d_model);
  create_linear(s, rng, prefix + ".o", d_model, d_model);
}

ad::Var multihead_attention(ad::Tape& t, Bound& p, const MhaParams& mp, ad::Var q_in,
                            ad::Var kv_in, ad::Var attn_bias, Mat* attn_out,
                            ad::Var rel_table) {
  int d = t.cols(q_in);
  if (t.cols(kv_in) != d) fail("multihead_attention: q/kv width mismatch");
  if (d % mp.heads != 0) fail("multihead_attention: d_model not divisible by heads");
  int dh = d / mp.heads;
  int r = t.rows(q_in), tn = t.rows(kv_in);

  ad::Var q = linear(t, p, mp.prefix + ".q", q_in);
  ad::Var k = linear(t, p, mp.prefix + ".k", kv_in);
  ad::Var v = linear(t, p, mp.prefix + ".v", kv_in);

  if (attn_out) attn_out->resize(0, 0);
  std::vector<ad::Var> head_outs;
  for (int h = 0; h < mp.heads; ++h) {
    ad::Var qh = t.slice_cols(q, h * dh, dh);
    ad::Var kh = t.slice_cols(k, h * dh, dh);
    ad::Var vh = t.slice_cols(v, h * dh, dh);
    ad::Var logits = t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(dh));
    if (rel_table.valid()) {
      ad::Var row = t.slice_rows(rel_table, h, 1);
      logits = t.add(logits, t.rel_pos_bias(row, r, tn));
    }
    if (attn_bias.valid()) logits = t.add(logits, attn_bias);
    ad::Var a = t.row_softmax(logits);
    if (attn_out) {
      Mat cur = *attn_out;
      attn_out->resize(cur.rows() + r, tn);
      if (cur.rows() > 0) attn_out->topRows(cur.rows()) = cur;
      attn_out->bottomRows(r) = t.val(a);
    }
    head_outs.push_back(t.matmul(a, vh));
  }
  ad::Var cat = t.concat_cols(head_outs);
  return linear(t, p, mp.prefix + ".o", cat);
}

double Adam::lr_at(long step) const {
  double s = static_cast<double>(std::max(1l, step));
  double w = static_cast<double>(std::max(1, cfg_.warmup_steps));
  if (cfg_.schedule == "constant") return cfg_.lr * std::min(1.0, s / w);
  // noam-style: linear warmup then inverse-sqrt decay, peak at cfg_.lr
  return cfg_.lr * std::min(s / w, std::sqrt(w / s));
}

double Adam::step(ParamStore& params, const std::map<std::string, Mat>& grads) {
  step_ += 1;
  double lr = lr_at(step_);

  double norm_sq = 0.0;
  for (const auto& [name, g] : grads) norm_sq += g.squaredNorm();
  double norm = std::sqrt(norm_sq);
  double scale = 1.0;
  if (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;

  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));

  for (const auto& [name, g_raw] : grads) {
    Mat& w = params.at(name);
    Mat g = g_raw * scale;
    auto& [m, v] = mv_[name];
    if (m.size() == 0) {
      m = Mat::Zero(w.rows(), w.cols());
      v = Mat::Zero(w.rows(), w.cols());
    }
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Mat mhat = m / bc1;
    Mat vhat = v / bc2;
    w -= lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg_.eps).matrix());
  }
  return norm;
}

void Adam::save_state(std::map<std::string, std::pair<Mat, Mat>>& mv, long& step) const {
  mv = mv_;
  step = step_;
}

void Adam::load_state(const std::map<std::string, std::pair<Mat, Mat>>& mv, long step) {
  mv_ = mv;
  step_ = step;
}

}  // namespace langdiar::nn
