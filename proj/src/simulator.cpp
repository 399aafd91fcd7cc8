#include "langdiar/simulator.hpp"

#include "langdiar/rttm.hpp"
#include "langdiar/wav.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <set>

namespace langdiar {

namespace {

double mean_power(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

// iterative radix-2 FFT, in place
void fft(std::vector<std::complex<double>>& a, bool inverse) {
  size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j], v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& v : a) v /= static_cast<double>(n);
}

std::vector<double> fft_convolve(const std::vector<double>& x, const std::vector<double>& h,
                                 size_t out_len) {
  size_t full = x.size() + h.size() - 1;
  size_t n = 1;
  while (n < full) n <<= 1;
  std::vector<std::complex<double>> fx(n), fh(n);
  for (size_t i = 0; i < x.size(); ++i) fx[i] = x[i];
  for (size_t i = 0; i < h.size(); ++i) fh[i] = h[i];
  fft(fx, false);
  fft(fh, false);
  for (size_t i = 0; i < n; ++i) fx[i] *= fh[i];
  fft(fx, true);
  std::vector<double> out(std::min(out_len, full));
  for (size_t i = 0; i < out.size(); ++i) out[i] = fx[i].real();
  return out;
}

struct PlannedSpan {
  std::string language;
  bool is_matrix = false;
  double length = 0.0;  // seconds
};

}  // namespace

void SimulationRecipe::validate() const {
  if (matrix_language.empty()) fail("SimulationRecipe: matrix_language required");
  if (embedded_languages.empty()) fail("SimulationRecipe: embedded_languages must be non-empty");
  for (const auto& e : embedded_languages)
    if (e == matrix_language)
      fail(strfmt("SimulationRecipe: embedded language '%s' equals the matrix language",
                  e.c_str()));
  std::set<std::string> uniq(embedded_languages.begin(), embedded_languages.end());
  if (uniq.size() != embedded_languages.size())
    fail("SimulationRecipe: duplicate embedded language");
  if (!(embedded_ratio > 0.0 && embedded_ratio < 1.0))
    fail("SimulationRecipe: embedded_ratio must be in (0,1)");
  if (target_duration <= 0) fail("SimulationRecipe: target_duration must be positive");
  if (augment_probability < 0 || augment_probability > 1)
    fail("SimulationRecipe: augment_probability must be in [0,1]");
  if (crossfade_seconds < 0) fail("SimulationRecipe: crossfade must be >= 0");
  if (min_embedded_seconds <= 0 || max_embedded_seconds < min_embedded_seconds ||
      min_matrix_seconds <= 0 || max_matrix_seconds < min_matrix_seconds)
    fail("SimulationRecipe: bad segment length bounds");
}

UtterancePool load_pool(const std::string& manifest_path) {
  UtterancePool pool;
  for (const auto& e : read_manifest(manifest_path)) {
    if (e.language.empty())
      fail(strfmt("load_pool: entry '%s' has no language", e.audio.c_str()));
    PoolEntry p;
    p.audio = read_wav(resolve_path(manifest_path, e.audio));
    p.language = e.language;
    p.speaker = e.speaker;
    pool.push_back(std::move(p));
  }
  return pool;
}

VcHook identity_vc_hook() {
  return [](const WaveformBuffer& segment, const WaveformBuffer&) { return segment; };
}

VcHook command_vc_hook(const std::string& command_template) {
  if (command_template.find("{in}") == std::string::npos ||
      command_template.find("{out}") == std::string::npos)
    fail("command_vc_hook: template must contain {in} and {out}");
  return [command_template](const WaveformBuffer& segment, const WaveformBuffer& reference) {
    namespace fs = std::filesystem;
    static int counter = 0;
    fs::path dir = fs::temp_directory_path();
    std::string tag = strfmt("ldvc_%d_%d", static_cast<int>(::getpid()), counter++);
    std::string in_path = (dir / (tag + "_in.wav")).string();
    std::string ref_path = (dir / (tag + "_ref.wav")).string();
    std::string out_path = (dir / (tag + "_out.wav")).string();
    write_wav(segment, in_path);
    write_wav(reference, ref_path);
    std::string cmd = command_template;
    auto replace_all = [&cmd](const std::string& key, const std::string& value) {
      size_t pos = 0;
      while ((pos = cmd.find(key, pos)) != std::string::npos) {
        cmd.replace(pos, key.size(), value);
        pos += value.size();
      }
    };
    replace_all("{in}", in_path);
    replace_all("{ref}", ref_path);
    replace_all("{out}", out_path);
    int rc = std::system(cmd.c_str());
    if (rc != 0) fail(strfmt("command_vc_hook: '%s' exited with %d", cmd.c_str(), rc));
    WaveformBuffer out = read_wav(out_path);
    fs::remove(in_path);
    fs::remove(ref_path);
    fs::remove(out_path);
    out.source_id = segment.source_id;
    return out;
  };
}

SimulatedUtterance build_utterance(const SimulationRecipe& recipe, const UtterancePool& pool,
                                   const VcHook& vc_hook) {
  recipe.validate();
  Rng rng(recipe.seed ? recipe.seed : 1);

  std::vector<std::string> wanted = recipe.embedded_languages;
  wanted.push_back(recipe.matrix_language);
  std::map<std::string, std::vector<size_t>> by_lang;
  for (size_t i = 0; i < pool.size(); ++i) by_lang[pool[i].language].push_back(i);
  int sample_rate = 0;
  for (const auto& lang : wanted) {
    if (by_lang[lang].empty())
      fail(strfmt("build_utterance: pool has no utterances for language '%s'", lang.c_str()));
  }
  for (const auto& p : pool) {
    if (sample_rate == 0) sample_rate = p.audio.sample_rate;
    if (p.audio.sample_rate != sample_rate)
      fail("build_utterance: pool sample rates are not uniform");
  }

  // plan embedded spans within the budget, then interleave with matrix spans
  double emb_budget = recipe.embedded_ratio * recipe.target_duration;
  std::vector<PlannedSpan> emb_spans;
  if (emb_budget >= recipe.min_embedded_total) {
    double remaining = emb_budget;
    while (remaining > 1e-9) {
      double len;
      if (remaining <= recipe.max_embedded_seconds) {
        len = remaining;
      } else {
        len = rng.uniform(recipe.min_embedded_seconds, recipe.max_embedded_seconds);
        if (remaining - len < recipe.min_embedded_seconds) len = remaining;
      }
      size_t pick =
          static_cast<size_t>(rng.uniform_int(0, static_cast<int>(recipe.embedded_languages.size()) - 1));
      emb_spans.push_back({recipe.embedded_languages[pick], false, len});
      remaining -= len;
    }
  }
  size_t n_matrix = emb_spans.size() + 1;
  double mat_budget = recipe.target_duration - emb_budget;
  std::vector<double> mat_weights(n_matrix);
  double wsum = 0.0;
  for (auto& w : mat_weights) {
    w = rng.uniform(0.7, 1.3);
    wsum += w;
  }
  std::vector<PlannedSpan> plan;
  for (size_t i = 0; i < n_matrix; ++i) {
    plan.push_back({recipe.matrix_language, true, mat_budget * mat_weights[i] / wsum});
    if (i < emb_spans.size()) plan.push_back(emb_spans[i]);
  }

  // draw source crops without replacement
  std::set<size_t> used;
  struct Crop {
    size_t pool_index;
    long offset;  // samples
    long length;
  };
  std::vector<Crop> crops;
  for (auto& span : plan) {
    long want = static_cast<long>(std::llround(span.length * sample_rate));
    want = std::max<long>(want, sample_rate / 50);  // at least 20 ms
    std::vector<size_t> eligible, fallback;
    for (size_t idx : by_lang[span.language]) {
      if (used.count(idx)) continue;
      fallback.push_back(idx);
      if (static_cast<long>(pool[idx].audio.samples.size()) >= want) eligible.push_back(idx);
    }
    size_t chosen;
    if (!eligible.empty()) {
      chosen = eligible[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(eligible.size()) - 1))];
    } else if (!fallback.empty()) {
      // nothing long enough: take the longest unused and shrink the span
      chosen = *std::max_element(fallback.begin(), fallback.end(), [&](size_t a, size_t b) {
        return pool[a].audio.samples.size() < pool[b].audio.samples.size();
      });
      want = static_cast<long>(pool[chosen].audio.samples.size());
    } else {
      fail(strfmt("build_utterance: target duration unreachable from pool for language '%s'",
                  span.language.c_str()));
    }
    used.insert(chosen);
    long max_off = static_cast<long>(pool[chosen].audio.samples.size()) - want;
    long off = max_off > 0 ? static_cast<long>(rng.uniform_int(0, static_cast<int>(max_off))) : 0;
    span.length = static_cast<double>(want) / sample_rate;
    crops.push_back({chosen, off, want});
  }

  // reference audio for the speaker-unification hook: the first matrix crop
  WaveformBuffer reference;
  reference.sample_rate = sample_rate;
  {
    const Crop& c = crops.front();
    const auto& src = pool[c.pool_index].audio.samples;
    reference.samples.assign(src.begin() + c.offset, src.begin() + c.offset + c.length);
    reference.source_id = pool[c.pool_index].audio.source_id;
  }

  // assemble with linear crossfades; label boundaries at crossfade midpoints
  long fade = static_cast<long>(std::llround(recipe.crossfade_seconds * sample_rate));
  SimulatedUtterance out;
  out.audio.sample_rate = sample_rate;
  out.audio.source_id = strfmt("sim_%llu", static_cast<unsigned long long>(recipe.seed));

  std::vector<double>& mix = out.audio.samples;
  std::vector<std::pair<long, long>> span_sample_ranges;  // start, length in output
  long cursor = 0;
  for (size_t i = 0; i < plan.size(); ++i) {
    const Crop& c = crops[i];
    const PoolEntry& src = pool[c.pool_index];
    WaveformBuffer seg;
    seg.sample_rate = sample_rate;
    seg.source_id = src.audio.source_id;
    seg.samples.assign(src.audio.samples.begin() + c.offset,
                       src.audio.samples.begin() + c.offset + c.length);
    if (!plan[i].is_matrix) {
      seg = vc_hook(seg, reference);
      if (static_cast<long>(seg.samples.size()) != c.length)
        fail("build_utterance: vc hook changed the segment length");
    }
    long start = i == 0 ? 0 : cursor - fade;
    if (start < 0) start = 0;
    long need = start + c.length;
    if (static_cast<long>(mix.size()) < need) mix.resize(static_cast<size_t>(need), 0.0);
    for (long s = 0; s < c.length; ++s) {
      double v = seg.samples[static_cast<size_t>(s)];
      double gain = 1.0;
      if (i > 0 && s < fade && fade > 0) gain = static_cast<double>(s) / fade;  // fade in
      if (i + 1 < plan.size() && s >= c.length - fade && fade > 0)
        gain = static_cast<double>(c.length - s) / fade;  // fade out
      mix[static_cast<size_t>(start + s)] += v * gain;
    }
    span_sample_ranges.push_back({start, c.length});
    cursor = start + c.length;
  }
  double total_dur = static_cast<double>(mix.size()) / sample_rate;

  // labels tile [0, duration]; interior boundaries sit mid-crossfade
  double prev_boundary = 0.0;
  for (size_t i = 0; i < plan.size(); ++i) {
    double end;
    if (i + 1 < plan.size()) {
      long next_start = span_sample_ranges[i + 1].first;
      end = (static_cast<double>(next_start) + fade / 2.0) / sample_rate;
    } else {
      end = total_dur;
    }
    const Crop& c = crops[i];
    ProvenanceRecord prov;
    prov.source_id = pool[c.pool_index].audio.source_id;
    prov.source_start = static_cast<double>(c.offset) / sample_rate;
    prov.source_end = static_cast<double>(c.offset + c.length) / sample_rate;
    prov.language = plan[i].language;
    prov.speaker = pool[c.pool_index].speaker;
    prov.out_start = prev_boundary;
    prov.out_end = end;
    out.provenance.push_back(prov);
    out.labels.segments.push_back({prev_boundary, end, plan[i].language});
    prev_boundary = end;
  }
  out.labels.recording_id = out.audio.source_id;

  double peak = 0.0;
  for (double v : mix) peak = std::max(peak, std::abs(v));
  if (peak > 1.0)
    for (double& v : mix) v /= peak;
  return out;
}

WaveformBuffer mix_noise(const WaveformBuffer& clean, const WaveformBuffer& noise,
                         double snr_db) {
  clean.validate();
  noise.validate();
  if (clean.sample_rate != noise.sample_rate) fail("mix_noise: sample-rate mismatch");
  double p_clean = mean_power(clean.samples);
  if (p_clean <= 0.0) fail("mix_noise: clean signal has zero power");

  // loop/crop the noise to the clean length
  std::vector<double> n(clean.samples.size());
  for (size_t i = 0; i < n.size(); ++i) n[i] = noise.samples[i % noise.samples.size()];
  double p_noise = mean_power(n);
  if (p_noise <= 0.0) fail("mix_noise: noise has zero power");

  double gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  WaveformBuffer out;
  out.sample_rate = clean.sample_rate;
  out.source_id = clean.source_id;
  out.samples.resize(clean.samples.size());
  double peak = 0.0;
  for (size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] = clean.samples[i] + gain * n[i];
    peak = std::max(peak, std::abs(out.samples[i]));
  }
  if (peak > 1.0)
    for (double& v : out.samples) v /= peak;  // rescales both parts: SNR preserved
  return out;
}

WaveformBuffer apply_rir(const WaveformBuffer& clean, const WaveformBuffer& rir) {
  clean.validate();
  if (rir.samples.empty()) fail("apply_rir: empty impulse response");
  for (double v : rir.samples)
    if (!std::isfinite(v)) fail("apply_rir: non-finite impulse response");
  double rir_energy = 0.0;
  for (double v : rir.samples) rir_energy += v * v;
  if (rir_energy <= 0.0) fail("apply_rir: all-zero impulse response");

  std::vector<double> y = fft_convolve(clean.samples, rir.samples, clean.samples.size());
  double rms_in = std::sqrt(mean_power(clean.samples));
  double rms_out = std::sqrt(mean_power(y));
  if (rms_out > 0.0) {
    double g = rms_in / rms_out;
    for (double& v : y) v *= g;
  }
  WaveformBuffer out;
  out.sample_rate = clean.sample_rate;
  out.source_id = clean.source_id;
  out.samples = std::move(y);
  return out;
}

SimulatedUtterance augment(const SimulatedUtterance& utt,
                           const std::vector<WaveformBuffer>& rir_pool,
                           const std::vector<WaveformBuffer>& noise_pool,
                           const SimulationRecipe& recipe, uint64_t salt) {
  Rng rng(mix_seed(recipe.seed ^ 0xa46d2e1b9ull, salt));
  if (rng.uniform() >= recipe.augment_probability) return utt;
  if (rir_pool.empty() || noise_pool.empty())
    fail("augment: empty RIR or noise pool while augmentation fired");
  if (recipe.snr_choices_db.empty()) fail("augment: no SNR choices");

  const WaveformBuffer& rir =
      rir_pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(rir_pool.size()) - 1))];
  const WaveformBuffer& noise =
      noise_pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(noise_pool.size()) - 1))];
  double snr = recipe.snr_choices_db[static_cast<size_t>(
      rng.uniform_int(0, static_cast<int>(recipe.snr_choices_db.size()) - 1))];

  SimulatedUtterance out = utt;
  out.audio = mix_noise(apply_rir(utt.audio, rir), noise, snr);
  out.augmented = true;
  out.applied_snr_db = snr;
  return out;
}

CorpusResult build_corpus(const CorpusSpec& spec, const UtterancePool& pool,
                          const std::vector<WaveformBuffer>& rir_pool,
                          const std::vector<WaveformBuffer>& noise_pool,
                          const std::string& output_dir, const VcHook& vc_hook) {
  if (spec.recipes.empty()) fail("build_corpus: no recipes");
  if (spec.total_hours <= 0) fail("build_corpus: total_hours must be positive");
  namespace fs = std::filesystem;
  fs::create_directories(output_dir);

  Rng rng(spec.seed);
  double target = spec.total_hours * 3600.0;
  double acc = 0.0;
  long index = 0;
  std::vector<ManifestEntry> entries;
  std::vector<SegmentAnnotation> all_labels;
  CorpusResult result;

  while (target - acc > 0.01 * target) {
    double remaining = target - acc;
    double want = rng.uniform(spec.utterance_seconds_min, spec.utterance_seconds_max);
    if (want > remaining) want = std::max(1.0, remaining);

    SimulationRecipe recipe = spec.recipes[static_cast<size_t>(index) % spec.recipes.size()];
    recipe.seed = mix_seed(spec.seed, static_cast<uint64_t>(index) + 1);
    recipe.target_duration = want;

    SimulatedUtterance utt;
    try {
      utt = augment(build_utterance(recipe, pool, vc_hook), rir_pool, noise_pool, recipe,
                    static_cast<uint64_t>(index));
    } catch (const Error& e) {
      fail(strfmt("build_corpus: recipe %ld failed: %s", index, e.what()));
    }

    std::string stem = strfmt("utt%06ld", index);
    std::string wav_rel = stem + ".wav";
    std::string rttm_rel = stem + ".rttm";
    utt.labels.recording_id = stem;
    write_wav(utt.audio, (fs::path(output_dir) / wav_rel).string());
    write_rttm_file({utt.labels}, (fs::path(output_dir) / rttm_rel).string());

    ManifestEntry e;
    e.audio = wav_rel;
    e.rttm = rttm_rel;
    e.duration = utt.audio.duration();
    e.recording_id = stem;
    e.languages.push_back(recipe.matrix_language);
    for (const auto& l : recipe.embedded_languages) e.languages.push_back(l);
    e.augmented = utt.augmented;
    e.snr_db = utt.applied_snr_db;
    e.provenance = utt.provenance;
    entries.push_back(std::move(e));

    std::string pair_key = recipe.matrix_language + "+";
    for (size_t i = 0; i < recipe.embedded_languages.size(); ++i)
      pair_key += (i ? "," : "") + recipe.embedded_languages[i];
    result.pair_counts[pair_key] += 1;

    acc += utt.audio.duration();
    ++index;
  }

  result.manifest_path = (fs::path(output_dir) / "corpus.jsonl").string();
  write_manifest(entries, result.manifest_path);
  result.total_seconds = acc;
  result.utterances = index;
  return result;
}

}  // namespace langdiar
