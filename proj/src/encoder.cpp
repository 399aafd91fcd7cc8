#include "langdiar/encoder.hpp"

namespace langdiar {

void EncoderConfig::validate() const {
  if (blocks < 1) fail("EncoderConfig: blocks must be >= 1");
  if (d_model < 1 || d_model % heads != 0)
    fail("EncoderConfig: d_model must be positive and divisible by heads");
  if (conv_kernel < 1 || conv_kernel % 2 == 0)
    fail("EncoderConfig: conv_kernel must be odd");
  if (ff_expansion < 1) fail("EncoderConfig: ff_expansion must be >= 1");
  if (pool_window < 1) fail("EncoderConfig: pool_window must be >= 1");
  if (dropout < 0 || dropout >= 1) fail("EncoderConfig: dropout must be in [0,1)");
}

Encoder::Encoder(EncoderConfig config) : cfg_(config) { cfg_.validate(); }

void Encoder::create_params(nn::ParamStore& s, Rng& rng) const {
  int d = cfg_.d_model;
  for (int b = 0; b < cfg_.blocks; ++b) {
    std::string bp = strfmt("encoder.block%d", b);
    nn::create_layer_norm(s, bp + ".ff1.ln", d);
    nn::create_linear(s, rng, bp + ".ff1.up", d, d * cfg_.ff_expansion);
    nn::create_linear(s, rng, bp + ".ff1.down", d * cfg_.ff_expansion, d);
    nn::create_layer_norm(s, bp + ".att.ln", d);
    nn::create_mha(s, rng, bp + ".att", d);
    nn::init_normal(rng, s.create(bp + ".att.rel", cfg_.heads, 2 * cfg_.rel_pos_max + 1), 0.02);
    nn::create_layer_norm(s, bp + ".conv.ln", d);
    nn::create_linear(s, rng, bp + ".conv.pw1", d, 2 * d);
    nn::init_xavier(rng, s.create(bp + ".conv.dw", cfg_.conv_kernel, d));
    nn::create_layer_norm(s, bp + ".conv.norm", d);
    nn::create_linear(s, rng, bp + ".conv.pw2", d, d);
    nn::create_layer_norm(s, bp + ".ff2.ln", d);
    nn::create_linear(s, rng, bp + ".ff2.up", d, d * cfg_.ff_expansion);
    nn::create_linear(s, rng, bp + ".ff2.down", d * cfg_.ff_expansion, d);
    nn::create_layer_norm(s, bp + ".out.ln", d);
  }
  nn::create_linear(s, rng, "encoder.pool.score", cfg_.d_model, 1);
}

namespace {

ad::Var maybe_dropout(ad::Tape& t, ad::Var x, double p, Rng* rng) {
  if (!rng || p <= 0.0) return x;
  return t.dropout(x, p, *rng);
}

}  // namespace

ad::Var Encoder::self_attention_block(ad::Tape& t, nn::Bound& p, int block, ad::Var x) const {
  std::string bp = strfmt("encoder.block%d", block);
  ad::Var xl = nn::layer_norm(t, p, bp + ".att.ln", x);
  nn::MhaParams mp{bp + ".att", cfg_.heads};
  return nn::multihead_attention(t, p, mp, xl, xl, ad::Var{}, nullptr, p[bp + ".att.rel"]);
}

ad::Var Encoder::conformer_block(ad::Tape& t, nn::Bound& p, int block, ad::Var x,
                                 Rng* train_rng) const {
  std::string bp = strfmt("encoder.block%d", block);
  double drop = cfg_.dropout;

  // half-step feedforward
  {
    ad::Var h = nn::layer_norm(t, p, bp + ".ff1.ln", x);
    h = t.gelu(nn::linear(t, p, bp + ".ff1.up", h));
    h = maybe_dropout(t, h, drop, train_rng);
    h = nn::linear(t, p, bp + ".ff1.down", h);
    x = t.add(x, t.scale(h, 0.5));
  }
  // self-attention with relative position bias
  {
    ad::Var h = self_attention_block(t, p, block, x);
    h = maybe_dropout(t, h, drop, train_rng);
    x = t.add(x, h);
  }
  // convolution module: pointwise → GLU → depthwise → norm → SiLU → pointwise
  {
    int d = cfg_.d_model;
    ad::Var h = nn::layer_norm(t, p, bp + ".conv.ln", x);
    h = nn::linear(t, p, bp + ".conv.pw1", h);
    ad::Var gate = t.sigmoid(t.slice_cols(h, d, d));
    h = t.mul(t.slice_cols(h, 0, d), gate);
    h = t.depthwise_conv_same(h, p[bp + ".conv.dw"]);
    h = nn::layer_norm(t, p, bp + ".conv.norm", h);
    h = t.silu(h);
    h = nn::linear(t, p, bp + ".conv.pw2", h);
    h = maybe_dropout(t, h, drop, train_rng);
    x = t.add(x, h);
  }
  // half-step feedforward
  {
    ad::Var h = nn::layer_norm(t, p, bp + ".ff2.ln", x);
    h = t.gelu(nn::linear(t, p, bp + ".ff2.up", h));
    h = maybe_dropout(t, h, drop, train_rng);
    h = nn::linear(t, p, bp + ".ff2.down", h);
    x = t.add(x, t.scale(h, 0.5));
  }
  return nn::layer_norm(t, p, bp + ".out.ln", x);
}

ad::Var Encoder::forward(ad::Tape& t, nn::Bound& p, ad::Var x, Rng* train_rng) const {
  if (t.cols(x) != cfg_.d_model)
    fail(strfmt("Encoder::forward: expected D=%d, got D=%d", cfg_.d_model, t.cols(x)));
  if (t.rows(x) < 1) fail("Encoder::forward: empty input");
  for (int b = 0; b < cfg_.blocks; ++b) x = conformer_block(t, p, b, x, train_rng);
  return x;
}

ad::Var Encoder::pool(ad::Tape& t, nn::Bound& p, ad::Var x, int window) const {
  if (window < 1) fail("Encoder::pool: window must be >= 1");
  if (window == 1) return x;
  long frames = t.rows(x);
  if (window > frames)
    fail(strfmt("Encoder::pool: window %d larger than %ld frames", window, frames));
  long t_out = frames / window;
  int d = t.cols(x);
  ad::Var head = t.slice_rows(x, 0, t_out * window);
  ad::Var scores = nn::linear(t, p, "encoder.pool.score", head);  // (T'*w)×1
  ad::Var weights = t.row_softmax(t.reshape(scores, t_out, window));
  ad::Var out;
  for (int j = 0; j < window; ++j) {
    ad::Var xj = t.slice_rows_strided(head, j, window, t_out);
    ad::Var wj = t.bcast_col(t.slice_cols(weights, j, 1), d);
    ad::Var term = t.mul(wj, xj);
    out = j == 0 ? term : t.add(out, term);
  }
  return out;
}

ContextualEmbeddings Encoder::encode(const nn::ParamStore& store,
                                     const FeatureSequence& feat) const {
  if (feat.features.rows() < 1) fail("Encoder::encode: empty feature sequence");
  if (feat.features.cols() != cfg_.d_model)
    fail(strfmt("Encoder::encode: expected D=%d, got D=%ld", cfg_.d_model,
                feat.features.cols()));
  ad::Tape t;
  nn::Bound p(t, store, false);
  ad::Var out = forward(t, p, t.constant(feat.features));
  ContextualEmbeddings emb;
  emb.embeddings = t.val(out);
  emb.frame_period = feat.frame_period;
  if (!all_finite(emb.embeddings)) fail("Encoder::encode: non-finite embeddings");
  return emb;
}

ContextualEmbeddings Encoder::attentive_pool(const nn::ParamStore& store,
                                             const ContextualEmbeddings& emb,
                                             int window) const {
  ad::Tape t;
  nn::Bound p(t, store, false);
  ad::Var out = pool(t, p, t.constant(emb.embeddings), window);
  ContextualEmbeddings pooled;
  pooled.embeddings = t.val(out);
  pooled.frame_period = emb.frame_period * window;
  return pooled;
}

}  // namespace langdiar
