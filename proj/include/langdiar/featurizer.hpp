#pragma once

#include "langdiar/core.hpp"
#include "langdiar/nn.hpp"

#include <string>
#include <vector>

namespace langdiar {

struct FeaturizerConfig {
  // Default stack: total stride 400 samples = 25 ms at 16 kHz.
  std::vector<int> kernels = {10, 3, 3, 3, 3, 5, 2};
  std::vector<int> strides = {5, 2, 2, 2, 2, 5, 1};
  std::vector<int> channels = {128, 128, 128, 128, 128, 128, 128};
  bool layer_norm = true;
  double norm_eps = 1e-5;
  int sample_rate = 16000;

  int d_model() const { return channels.empty() ? 0 : channels.back(); }
  void validate() const;

  // MMS-compatible preset: total stride 320 samples = 20 ms.
  static FeaturizerConfig stride320(int width = 128);
};

struct FeatureSequence {
  Mat features;  // T×D
  double frame_period = 0.025;
  int d_model = 0;
};

// Analytic receptive field (samples) and total stride of the stack.
std::pair<long, long> receptive_field(const FeaturizerConfig& config);

class Featurizer {
 public:
  explicit Featurizer(FeaturizerConfig config);

  void create_params(nn::ParamStore& store, Rng& rng) const;

  // wave: N×1 samples. Returns T×D features on the tape.
  ad::Var forward(ad::Tape& t, nn::Bound& p, ad::Var wave) const;

  // No-grad convenience wrapper over forward().
  FeatureSequence extract(const nn::ParamStore& store, const WaveformBuffer& wav) const;

  const FeaturizerConfig& config() const { return cfg_; }
  double frame_period() const;
  long min_samples() const { return receptive_field(cfg_).first; }

  // Conv-weight exchange: a JSON shape manifest plus raw little-endian
  // float32 values, layer by layer (weight then bias, norm gain/bias when
  // present). Lets an externally trained front end be dropped in.
  void export_weights(const nn::ParamStore& store, const std::string& manifest_path,
                      const std::string& bin_path) const;
  void import_weights(nn::ParamStore& store, const std::string& manifest_path,
                      const std::string& bin_path) const;

  std::vector<std::string> param_names() const;

 private:
  FeaturizerConfig cfg_;
};

}  // namespace langdiar
