#pragma once

#include "langdiar/core.hpp"
#include "langdiar/encoder.hpp"
#include "langdiar/nn.hpp"

#include <map>
#include <string>
#include <vector>

namespace langdiar {

struct DecoderConfig {
  int queries = 5;  // slot 0 is reserved for VAD
  int steps = 6;    // refinement iterations n
  int heads = 4;
  int d_model = 128;
  int ff_expansion = 4;
  double activity_threshold = 0.5;
  double mask_threshold = 0.5;        // cross-attention gate on previous mask
  bool empty_mask_fallback = true;    // lift the mask for rows with no admitted frame

  void validate() const;
};

// Value-level decoder iterate: queries q_i, masks m_i (post-sigmoid),
// activities c_i.
struct QueryState {
  Mat queries;     // K×D
  Mat masks;       // K×T in [0,1]
  Vec activities;  // K in [0,1]
  int step = 0;
};

struct DiarizationPrediction {
  LabelMatrix label_matrix;                 // channel 0 = VAD, then sorted active queries
  std::vector<QueryState> per_step_states;  // n+1 entries, for deep supervision
  std::vector<int> channel_queries;         // originating query slot per channel
};

// Tape-side view of one refinement step, used by the training loss.
struct StepVars {
  ad::Var mask_logits;  // K×T
  ad::Var masks;        // sigmoid(mask_logits)
  ad::Var act_logits;   // K×1
  ad::Var activities;   // sigmoid(act_logits)
};

struct DecodeTrace {
  std::vector<StepVars> steps;          // n+1
  std::vector<Mat> query_values;        // n+1 snapshots of q_i
  std::vector<Mat> cross_attn_weights;  // per refine step: (heads·K)×T
};

class Decoder {
 public:
  explicit Decoder(DecoderConfig config);

  void create_params(nn::ParamStore& store, Rng& rng) const;

  // Full tape run: init + n refine steps (n defaults to config steps).
  DecodeTrace run(ad::Tape& t, nn::Bound& p, ad::Var emb, int n_steps = -1) const;

  // Spec-level value operations.
  QueryState init_state(const nn::ParamStore& store, const ContextualEmbeddings& emb) const;
  QueryState refine(const QueryState& state, const ContextualEmbeddings& emb,
                    const nn::ParamStore& store, Mat* attn_out = nullptr) const;
  DiarizationPrediction decode(const nn::ParamStore& store, const ContextualEmbeddings& emb,
                               int n_steps = -1, double activity_threshold = -1.0) const;

  // Mask logits for explicit queries (3-layer feedforward then inner product
  // against per-frame embeddings).
  Mat mask_head(const nn::ParamStore& store, const Mat& queries, const Mat& emb) const;
  // Single-linear activity logits.
  Vec classify(const nn::ParamStore& store, const Mat& queries) const;

  const DecoderConfig& config() const { return cfg_; }

  // Assembles the sorted output matrix from a final state. Channel roles are
  // "q<slot>" placeholders unless a slot->language binding is supplied.
  DiarizationPrediction assemble(const QueryState& final_state,
                                 const std::vector<QueryState>& states, double frame_period,
                                 double activity_threshold,
                                 const std::map<int, std::string>* binding = nullptr) const;

 private:
  ad::Var mask_logits_on_tape(ad::Tape& t, nn::Bound& p, ad::Var queries, ad::Var emb) const;
  ad::Var act_logits_on_tape(ad::Tape& t, nn::Bound& p, ad::Var queries) const;
  // One decoder block: masked cross-attention, query self-attention,
  // feedforward. prev_mask gates the cross-attention.
  ad::Var step_queries(ad::Tape& t, nn::Bound& p, ad::Var queries, ad::Var emb,
                       const Mat& prev_mask, Mat* attn_out) const;

  DecoderConfig cfg_;
};

}  // namespace langdiar
