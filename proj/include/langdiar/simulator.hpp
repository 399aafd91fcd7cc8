#pragma once

#include "langdiar/core.hpp"
#include "langdiar/manifest.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace langdiar {

struct SimulationRecipe {
  std::string matrix_language;
  std::vector<std::string> embedded_languages;
  double target_duration = 10.0;  // seconds
  double embedded_ratio = 0.3;    // fraction of the utterance in embedded languages
  uint64_t seed = 0;
  double augment_probability = 0.5;
  std::vector<double> snr_choices_db = {5.0, 10.0, 15.0, 20.0};

  // segment geometry
  double min_matrix_seconds = 1.5;
  double max_matrix_seconds = 6.0;
  double min_embedded_seconds = 0.8;
  double max_embedded_seconds = 3.0;
  double crossfade_seconds = 0.01;
  // embedded budgets below this produce a purely monolingual utterance
  double min_embedded_total = 0.25;

  void validate() const;
};

struct PoolEntry {
  WaveformBuffer audio;
  std::string language;
  std::string speaker;
};

using UtterancePool = std::vector<PoolEntry>;

// Loads every entry of a monolingual JSON-lines manifest into memory.
UtterancePool load_pool(const std::string& manifest_path);

struct SimulatedUtterance {
  WaveformBuffer audio;
  SegmentAnnotation labels;
  std::vector<ProvenanceRecord> provenance;
  bool augmented = false;
  std::optional<double> applied_snr_db;
};

// Speaker-unification hook: receives a non-matrix segment and reference audio
// in the matrix speaker's voice, returns the converted segment (same length).
using VcHook = std::function<WaveformBuffer(const WaveformBuffer& segment,
                                            const WaveformBuffer& reference)>;

VcHook identity_vc_hook();
// External command contract; the template must contain {in}, {ref} and {out}
// placeholders replaced by WAV paths.
VcHook command_vc_hook(const std::string& command_template);

// Alternating matrix/embedded concatenation with short crossfades, labels at
// crossfade midpoints, pool items drawn without replacement, deterministic in
// recipe.seed.
SimulatedUtterance build_utterance(const SimulationRecipe& recipe, const UtterancePool& pool,
                                   const VcHook& vc_hook = identity_vc_hook());

// Additive noise at an exact SNR measured over full-utterance power. The
// noise is looped or cropped to the clean length. Peak normalization is
// applied only if the mix would clip (it rescales both parts, preserving the
// SNR).
WaveformBuffer mix_noise(const WaveformBuffer& clean, const WaveformBuffer& noise,
                         double snr_db);

// Full convolution with the impulse response, truncated to the input length
// and RMS-normalized back to the input level.
WaveformBuffer apply_rir(const WaveformBuffer& clean, const WaveformBuffer& rir);

// With probability recipe.augment_probability (seeded by recipe.seed and
// salt): RIR then noise at an SNR drawn from recipe.snr_choices_db. Labels
// are never touched.
SimulatedUtterance augment(const SimulatedUtterance& utt,
                           const std::vector<WaveformBuffer>& rir_pool,
                           const std::vector<WaveformBuffer>& noise_pool,
                           const SimulationRecipe& recipe, uint64_t salt = 0);

struct CorpusSpec {
  std::vector<SimulationRecipe> recipes;  // cycled round-robin
  double total_hours = 0.1;
  double utterance_seconds_min = 6.0;
  double utterance_seconds_max = 12.0;
  uint64_t seed = 0;
};

struct CorpusResult {
  std::string manifest_path;
  double total_seconds = 0.0;
  long utterances = 0;
  std::map<std::string, long> pair_counts;  // "matrix+emb1,emb2" -> count
};

// Writes WAV + RTTM pairs plus a JSON-lines manifest with provenance under
// output_dir. Total duration lands within 1% of the request.
CorpusResult build_corpus(const CorpusSpec& spec, const UtterancePool& pool,
                          const std::vector<WaveformBuffer>& rir_pool,
                          const std::vector<WaveformBuffer>& noise_pool,
                          const std::string& output_dir,
                          const VcHook& vc_hook = identity_vc_hook());

}  // namespace langdiar
