#pragma once

#include "langdiar/featurizer.hpp"
#include "langdiar/nn.hpp"

namespace langdiar {

struct EncoderConfig {
  int blocks = 6;
  int heads = 4;
  int d_model = 128;
  int conv_kernel = 15;
  int ff_expansion = 4;
  double dropout = 0.0;
  int pool_window = 1;   // 1 disables pooling; {4, 8} are the ablation settings
  int rel_pos_max = 64;  // clamp distance for the relative position bias

  void validate() const;
};

struct ContextualEmbeddings {
  Mat embeddings;  // T'×D
  double frame_period = 0.025;
};

class Encoder {
 public:
  explicit Encoder(EncoderConfig config);

  void create_params(nn::ParamStore& store, Rng& rng) const;

  // x: T×D features. Frame count is preserved. `train_rng` enables dropout.
  ad::Var forward(ad::Tape& t, nn::Bound& p, ad::Var x, Rng* train_rng = nullptr) const;

  // Learned-score softmax pooling over fixed windows; trailing remainder
  // frames are dropped. T' = floor(T / window).
  ad::Var pool(ad::Tape& t, nn::Bound& p, ad::Var x, int window) const;

  // Value-level wrappers.
  ContextualEmbeddings encode(const nn::ParamStore& store, const FeatureSequence& feat) const;
  ContextualEmbeddings attentive_pool(const nn::ParamStore& store,
                                      const ContextualEmbeddings& emb, int window) const;

  // Exposed for the degenerate-length oracle in tests.
  ad::Var self_attention_block(ad::Tape& t, nn::Bound& p, int block, ad::Var x) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  ad::Var conformer_block(ad::Tape& t, nn::Bound& p, int block, ad::Var x,
                          Rng* train_rng) const;

  EncoderConfig cfg_;
};

}  // namespace langdiar
