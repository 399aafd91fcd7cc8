#include "langdiar/decoder.hpp"

#include <algorithm>
#include <numeric>

namespace langdiar {

namespace {
constexpr double kMaskedLogit = -1e30;
}

void DecoderConfig::validate() const {
  if (queries < 2) fail("DecoderConfig: need at least the VAD slot plus one language query");
  if (steps < 1) fail("DecoderConfig: steps must be >= 1");
  if (d_model < 1 || d_model % heads != 0)
    fail("DecoderConfig: d_model must be positive and divisible by heads");
  if (!(activity_threshold > 0 && activity_threshold < 1))
    fail("DecoderConfig: activity_threshold must be in (0,1)");
  if (!(mask_threshold > 0 && mask_threshold < 1))
    fail("DecoderConfig: mask_threshold must be in (0,1)");
}

Decoder::Decoder(DecoderConfig config) : cfg_(config) { cfg_.validate(); }

void Decoder::create_params(nn::ParamStore& s, Rng& rng) const {
  int d = cfg_.d_model;
  nn::init_normal(rng, s.create("decoder.q0", cfg_.queries, d), 0.5);
  nn::create_layer_norm(s, "decoder.cross.ln", d);
  nn::create_mha(s, rng, "decoder.cross", d);
  nn::create_layer_norm(s, "decoder.self.ln", d);
  nn::create_mha(s, rng, "decoder.self", d);
  nn::create_layer_norm(s, "decoder.ff.ln", d);
  nn::create_linear(s, rng, "decoder.ff.up", d, d * cfg_.ff_expansion);
  nn::create_linear(s, rng, "decoder.ff.down", d * cfg_.ff_expansion, d);
  // mask module: three feedforward layers into mask-embedding space
  nn::create_linear(s, rng, "decoder.mask.l0", d, d);
  nn::create_linear(s, rng, "decoder.mask.l1", d, d);
  nn::create_linear(s, rng, "decoder.mask.l2", d, d);
  // query classifier: one linear layer
  nn::create_linear(s, rng, "decoder.cls", d, 1);
}

ad::Var Decoder::mask_logits_on_tape(ad::Tape& t, nn::Bound& p, ad::Var queries,
                                     ad::Var emb) const {
  ad::Var h = t.gelu(nn::linear(t, p, "decoder.mask.l0", queries));
  h = t.gelu(nn::linear(t, p, "decoder.mask.l1", h));
  h = nn::linear(t, p, "decoder.mask.l2", h);
  return t.matmul(h, t.transpose(emb));  // K×T inner products
}

ad::Var Decoder::act_logits_on_tape(ad::Tape& t, nn::Bound& p, ad::Var queries) const {
  return nn::linear(t, p, "decoder.cls", queries);
}

ad::Var Decoder::step_queries(ad::Tape& t, nn::Bound& p, ad::Var queries, ad::Var emb,
                              const Mat& prev_mask, Mat* attn_out) const {
  long k = t.rows(queries), frames = t.rows(emb);
  if (prev_mask.rows() != k || prev_mask.cols() != frames)
    fail("Decoder::step_queries: mask shape mismatch");

  // additive gate: frames below threshold are excluded; a fully excluded row
  // falls back to unrestricted attention unless the fallback is disabled
  Mat bias = Mat::Zero(k, frames);
  for (long q = 0; q < k; ++q) {
    bool any = false;
    for (long f = 0; f < frames; ++f) any = any || prev_mask(q, f) >= cfg_.mask_threshold;
    if (!any && cfg_.empty_mask_fallback) continue;
    for (long f = 0; f < frames; ++f)
      if (prev_mask(q, f) < cfg_.mask_threshold) bias(q, f) = kMaskedLogit;
  }

  {
    ad::Var ql = nn::layer_norm(t, p, "decoder.cross.ln", queries);
    nn::MhaParams mp{"decoder.cross", cfg_.heads};
    ad::Var h = nn::multihead_attention(t, p, mp, ql, emb, t.constant(bias), attn_out);
    queries = t.add(queries, h);
  }
  {
    ad::Var ql = nn::layer_norm(t, p, "decoder.self.ln", queries);
    nn::MhaParams mp{"decoder.self", cfg_.heads};
    ad::Var h = nn::multihead_attention(t, p, mp, ql, ql, ad::Var{});
    queries = t.add(queries, h);
  }
  {
    ad::Var h = nn::layer_norm(t, p, "decoder.ff.ln", queries);
    h = t.gelu(nn::linear(t, p, "decoder.ff.up", h));
    h = nn::linear(t, p, "decoder.ff.down", h);
    queries = t.add(queries, h);
  }
  return queries;
}

DecodeTrace Decoder::run(ad::Tape& t, nn::Bound& p, ad::Var emb, int n_steps) const {
  if (t.cols(emb) != cfg_.d_model)
    fail(strfmt("Decoder::run: expected D=%d, got D=%d", cfg_.d_model, t.cols(emb)));
  if (t.rows(emb) < 1) fail("Decoder::run: empty embeddings");
  int n = n_steps < 0 ? cfg_.steps : n_steps;

  DecodeTrace trace;
  ad::Var queries = p["decoder.q0"];
  ad::Var mask_logits = mask_logits_on_tape(t, p, queries, emb);
  ad::Var act_logits = act_logits_on_tape(t, p, queries);
  trace.steps.push_back(
      {mask_logits, t.sigmoid(mask_logits), act_logits, t.sigmoid(act_logits)});
  trace.query_values.push_back(t.val(queries));

  for (int i = 0; i < n; ++i) {
    Mat prev_mask = t.val(trace.steps.back().masks);
    Mat attn;
    queries = step_queries(t, p, queries, emb, prev_mask, &attn);
    trace.cross_attn_weights.push_back(std::move(attn));
    mask_logits = mask_logits_on_tape(t, p, queries, emb);
    act_logits = act_logits_on_tape(t, p, queries);
    trace.steps.push_back(
        {mask_logits, t.sigmoid(mask_logits), act_logits, t.sigmoid(act_logits)});
    trace.query_values.push_back(t.val(queries));
  }
  return trace;
}

QueryState Decoder::init_state(const nn::ParamStore& store,
                               const ContextualEmbeddings& emb) const {
  if (emb.embeddings.rows() < 1) fail("Decoder::init_state: empty embeddings");
  QueryState st;
  st.queries = store.at("decoder.q0");
  st.masks = Mat(cfg_.queries, emb.embeddings.rows());
  Mat logits = mask_head(store, st.queries, emb.embeddings);
  st.masks = logits.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  Vec act = classify(store, st.queries);
  st.activities = act.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  st.step = 0;
  return st;
}

QueryState Decoder::refine(const QueryState& state, const ContextualEmbeddings& emb,
                           const nn::ParamStore& store, Mat* attn_out) const {
  if (state.step >= cfg_.steps)
    fail(strfmt("Decoder::refine: step %d already at n=%d", state.step, cfg_.steps));
  ad::Tape t;
  nn::Bound p(t, store, false);
  ad::Var emb_v = t.constant(emb.embeddings);
  ad::Var q = step_queries(t, p, t.constant(state.queries), emb_v, state.masks, attn_out);
  ad::Var ml = mask_logits_on_tape(t, p, q, emb_v);
  ad::Var al = act_logits_on_tape(t, p, q);
  QueryState out;
  out.queries = t.val(q);
  out.masks = t.val(t.sigmoid(ml));
  Mat a = t.val(t.sigmoid(al));
  out.activities = Eigen::Map<Vec>(a.data(), a.rows());
  out.step = state.step + 1;
  return out;
}

Mat Decoder::mask_head(const nn::ParamStore& store, const Mat& queries, const Mat& emb) const {
  if (queries.cols() != emb.cols()) fail("Decoder::mask_head: dimension mismatch");
  ad::Tape t;
  nn::Bound p(t, store, false);
  return t.val(mask_logits_on_tape(t, p, t.constant(queries), t.constant(emb)));
}

Vec Decoder::classify(const nn::ParamStore& store, const Mat& queries) const {
  ad::Tape t;
  nn::Bound p(t, store, false);
  Mat logits = t.val(act_logits_on_tape(t, p, t.constant(queries)));
  return Eigen::Map<Vec>(logits.data(), logits.rows());
}

DiarizationPrediction Decoder::assemble(const QueryState& final_state,
                                        const std::vector<QueryState>& states,
                                        double frame_period, double activity_threshold,
                                        const std::map<int, std::string>* binding) const {
  long k = final_state.masks.rows(), frames = final_state.masks.cols();

  // language slots sorted by descending activity, ties by ascending slot
  std::vector<int> active;
  for (int q = 1; q < k; ++q)
    if (final_state.activities(q) >= activity_threshold) active.push_back(q);
  std::stable_sort(active.begin(), active.end(), [&](int a, int b) {
    if (final_state.activities(a) != final_state.activities(b))
      return final_state.activities(a) > final_state.activities(b);
    return a < b;
  });

  DiarizationPrediction pred;
  pred.per_step_states = states;
  pred.label_matrix.frame_period = frame_period;
  pred.label_matrix.values = Mat(1 + static_cast<long>(active.size()), frames);
  pred.label_matrix.values.row(0) = final_state.masks.row(0);
  pred.label_matrix.channel_roles.push_back(kVadLabel);
  pred.channel_queries.push_back(0);
  long ch = 1;
  for (int q : active) {
    pred.label_matrix.values.row(ch) = final_state.masks.row(q);
    std::string role = strfmt("q%d", q);
    if (binding) {
      auto it = binding->find(q);
      if (it != binding->end()) role = it->second;
    }
    pred.label_matrix.channel_roles.push_back(role);
    pred.channel_queries.push_back(q);
    ++ch;
  }
  return pred;
}

DiarizationPrediction Decoder::decode(const nn::ParamStore& store,
                                      const ContextualEmbeddings& emb, int n_steps,
                                      double activity_threshold) const {
  int n = n_steps < 0 ? cfg_.steps : n_steps;
  double thr = activity_threshold < 0 ? cfg_.activity_threshold : activity_threshold;
  if (n < 1) fail("Decoder::decode: n must be >= 1");
  if (!(thr > 0 && thr < 1)) fail("Decoder::decode: activity_threshold must be in (0,1)");

  ad::Tape t;
  nn::Bound p(t, store, false);
  DecodeTrace trace = run(t, p, t.constant(emb.embeddings), n);

  std::vector<QueryState> states;
  for (size_t i = 0; i < trace.steps.size(); ++i) {
    QueryState st;
    st.step = static_cast<int>(i);
    st.masks = t.val(trace.steps[i].masks);
    Mat a = t.val(trace.steps[i].activities);
    st.activities = Eigen::Map<Vec>(a.data(), a.rows());
    st.queries = trace.query_values[i];
    states.push_back(std::move(st));
  }

  return assemble(states.back(), states, emb.frame_period, thr);
}

}  // namespace langdiar
