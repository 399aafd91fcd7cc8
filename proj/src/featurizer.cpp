#include "langdiar/featurizer.hpp"

#include "json.hpp"

#include <fstream>

namespace langdiar {

using nlohmann::json;

void FeaturizerConfig::validate() const {
  if (kernels.empty()) fail("FeaturizerConfig: empty layer list");
  if (kernels.size() != strides.size() || kernels.size() != channels.size())
    fail("FeaturizerConfig: kernels/strides/channels must have equal length");
  for (size_t i = 0; i < kernels.size(); ++i) {
    if (kernels[i] < 1 || strides[i] < 1 || channels[i] < 1)
      fail(strfmt("FeaturizerConfig: bad layer %zu (k=%d s=%d c=%d)", i, kernels[i], strides[i],
                  channels[i]));
  }
  if (sample_rate <= 0) fail("FeaturizerConfig: sample_rate must be positive");
}

FeaturizerConfig FeaturizerConfig::stride320(int width) {
  FeaturizerConfig c;
  c.kernels = {10, 3, 3, 3, 3, 2, 2};
  c.strides = {5, 2, 2, 2, 2, 2, 2};
  c.channels.assign(7, width);
  return c;
}

std::pair<long, long> receptive_field(const FeaturizerConfig& config) {
  config.validate();
  long rf = 1, stride = 1;
  for (size_t i = 0; i < config.kernels.size(); ++i) {
    rf += static_cast<long>(config.kernels[i] - 1) * stride;
    stride *= config.strides[i];
  }
  return {rf, stride};
}

Featurizer::Featurizer(FeaturizerConfig config) : cfg_(std::move(config)) {
  cfg_.validate();
}

double Featurizer::frame_period() const {
  return static_cast<double>(receptive_field(cfg_).second) / cfg_.sample_rate;
}

std::vector<std::string> Featurizer::param_names() const {
  std::vector<std::string> names;
  for (size_t i = 0; i < cfg_.kernels.size(); ++i) {
    std::string prefix = strfmt("featurizer.conv%zu", i);
    names.push_back(prefix + ".w");
    names.push_back(prefix + ".b");
    if (cfg_.layer_norm) {
      names.push_back(prefix + ".ln.g");
      names.push_back(prefix + ".ln.b");
    }
  }
  return names;
}

void Featurizer::create_params(nn::ParamStore& store, Rng& rng) const {
  int in_ch = 1;
  for (size_t i = 0; i < cfg_.kernels.size(); ++i) {
    std::string prefix = strfmt("featurizer.conv%zu", i);
    Mat& w = store.create(prefix + ".w", cfg_.kernels[i] * in_ch, cfg_.channels[i]);
    nn::init_xavier(rng, w);
    store.create(prefix + ".b", 1, cfg_.channels[i]);
    if (cfg_.layer_norm) {
      store.create(prefix + ".ln.g", 1, cfg_.channels[i]).setOnes();
      store.create(prefix + ".ln.b", 1, cfg_.channels[i]);
    }
    in_ch = cfg_.channels[i];
  }
}

ad::Var Featurizer::forward(ad::Tape& t, nn::Bound& p, ad::Var wave) const {
  if (t.cols(wave) != 1) fail("Featurizer::forward: wave must be N×1");
  long n = t.rows(wave);
  long need = min_samples();
  if (n < need)
    fail(strfmt("Featurizer::forward: input has %ld samples, the stack needs at least %ld", n,
                need));
  ad::Var x = wave;
  for (size_t i = 0; i < cfg_.kernels.size(); ++i) {
    std::string prefix = strfmt("featurizer.conv%zu", i);
    ad::Var cols = t.im2col(x, cfg_.kernels[i], cfg_.strides[i]);
    ad::Var y = t.add(t.matmul(cols, p[prefix + ".w"]),
                      t.bcast_row(p[prefix + ".b"], t.rows(cols)));
    if (cfg_.layer_norm) y = nn::layer_norm(t, p, prefix + ".ln", y, cfg_.norm_eps);
    x = t.gelu(y);
  }
  return x;
}

FeatureSequence Featurizer::extract(const nn::ParamStore& store,
                                    const WaveformBuffer& wav) const {
  wav.validate();
  if (wav.sample_rate != cfg_.sample_rate)
    fail(strfmt("Featurizer::extract: expected %d Hz input, got %d Hz", cfg_.sample_rate,
                wav.sample_rate));
  ad::Tape t;
  nn::Bound p(t, store, /*requires_grad=*/false);
  Mat w(static_cast<long>(wav.samples.size()), 1);
  for (size_t i = 0; i < wav.samples.size(); ++i) w(static_cast<long>(i), 0) = wav.samples[i];
  ad::Var out = forward(t, p, t.constant(std::move(w)));
  FeatureSequence fs;
  fs.features = t.val(out);
  fs.frame_period = frame_period();
  fs.d_model = cfg_.d_model();
  if (!all_finite(fs.features)) fail("Featurizer::extract: non-finite features");
  return fs;
}

void Featurizer::export_weights(const nn::ParamStore& store, const std::string& manifest_path,
                                const std::string& bin_path) const {
  json layers = json::array();
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) fail(strfmt("export_weights: cannot open '%s'", bin_path.c_str()));
  for (const auto& name : param_names()) {
    const Mat& m = store.at(name);
    layers.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    for (long i = 0; i < m.size(); ++i) {
      float f = static_cast<float>(m.data()[i]);
      bin.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  }
  json manifest = {{"format", "conv-f32-le"}, {"layers", layers}};
  std::ofstream mf(manifest_path);
  if (!mf) fail(strfmt("export_weights: cannot open '%s'", manifest_path.c_str()));
  mf << manifest.dump(2) << "\n";
}

void Featurizer::import_weights(nn::ParamStore& store, const std::string& manifest_path,
                                const std::string& bin_path) const {
  std::ifstream mf(manifest_path);
  if (!mf) fail(strfmt("import_weights: cannot open '%s'", manifest_path.c_str()));
  json manifest;
  try {
    mf >> manifest;
  } catch (const std::exception& e) {
    fail(strfmt("import_weights: bad manifest: %s", e.what()));
  }
  if (manifest.value("format", "") != "conv-f32-le")
    fail("import_weights: unsupported format tag");
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) fail(strfmt("import_weights: cannot open '%s'", bin_path.c_str()));
  for (const auto& layer : manifest.at("layers")) {
    std::string name = layer.at("name").get<std::string>();
    long rows = layer.at("rows").get<long>();
    long cols = layer.at("cols").get<long>();
    Mat& m = store.at(name);
    if (m.rows() != rows || m.cols() != cols)
      fail(strfmt("import_weights: shape mismatch for '%s': file %ldx%ld, model %ldx%ld",
                  name.c_str(), rows, cols, m.rows(), m.cols()));
    for (long i = 0; i < m.size(); ++i) {
      float f;
      if (!bin.read(reinterpret_cast<char*>(&f), sizeof(float)))
        fail("import_weights: binary file truncated");
      m.data()[i] = static_cast<double>(f);
    }
  }
}

}  // namespace langdiar
