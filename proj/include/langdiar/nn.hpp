#pragma once

#include "langdiar/autodiff.hpp"
#include "langdiar/common.hpp"

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace langdiar::nn {

// Named parameter matrices with a stable iteration order (creation order).
class ParamStore {
 public:
  Mat& create(const std::string& name, int rows, int cols);
  Mat& at(const std::string& name);
  const Mat& at(const std::string& name) const;
  bool has(const std::string& name) const { return values_.count(name) > 0; }
  const std::vector<std::string>& names() const { return names_; }
  size_t total_size() const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Mat> values_;
};

// Lifts store parameters onto a tape on first use; remembers the Var so a
// parameter shared by several call sites is a single leaf.
class Bound {
 public:
  Bound(ad::Tape& tape, const ParamStore& store, bool requires_grad = true)
      : tape_(&tape), store_(&store), requires_grad_(requires_grad) {}

  ad::Var operator[](const std::string& name);
  bool used(const std::string& name) const { return vars_.count(name) > 0; }
  Mat grad_of(const std::string& name) const;  // zeros if parameter unused
  ad::Tape& tape() { return *tape_; }

 private:
  ad::Tape* tape_;
  const ParamStore* store_;
  bool requires_grad_;
  std::unordered_map<std::string, ad::Var> vars_;
};

// initializers
void init_xavier(Rng& rng, Mat& w);
void init_normal(Rng& rng, Mat& w, double stddev);

// layer builders
ad::Var linear(ad::Tape& t, Bound& p, const std::string& prefix, ad::Var x);  // x·W + b
ad::Var layer_norm(ad::Tape& t, Bound& p, const std::string& prefix, ad::Var x,
                   double eps = 1e-5);
void create_linear(ParamStore& s, Rng& rng, const std::string& prefix, int in, int out,
                   bool zero = false);
void create_layer_norm(ParamStore& s, const std::string& prefix, int dim);

// Multi-head attention. q_in: R×D query-side input, kv_in: T×D key/value
// side. attn_bias (optional, R×T) is added to every head's logits before
// softmax; use large negative entries to exclude positions. attn_out, when
// non-null, receives the concatenated per-head attention weights
// ((heads·R)×T), value copies for inspection.
struct MhaParams {
  std::string prefix;
  int heads = 4;
};
ad::Var multihead_attention(ad::Tape& t, Bound& p, const MhaParams& mp, ad::Var q_in,
                            ad::Var kv_in, ad::Var attn_bias, Mat* attn_out = nullptr,
                            ad::Var rel_table = ad::Var{});
void create_mha(ParamStore& s, Rng& rng, const std::string& prefix, int d_model);

// Adam with warmup schedules and global-norm clipping.
struct OptimizerConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;
  int warmup_steps = 200;
  std::string schedule = "noam";  // noam | constant
};

class Adam {
 public:
  explicit Adam(const OptimizerConfig& cfg) : cfg_(cfg) {}

  // grads: name -> gradient (missing names are skipped). Returns the global
  // gradient norm before clipping.
  double step(ParamStore& params, const std::map<std::string, Mat>& grads);

  double lr_at(long step) const;
  long steps_taken() const { return step_; }

  // checkpoint support
  void save_state(std::map<std::string, std::pair<Mat, Mat>>& mv, long& step) const;
  void load_state(const std::map<std::string, std::pair<Mat, Mat>>& mv, long step);

 private:
  OptimizerConfig cfg_;
  long step_ = 0;
  std::map<std::string, std::pair<Mat, Mat>> mv_;  // first/second moments
};

}  // namespace langdiar::nn
