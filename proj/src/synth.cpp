#include "langdiar/synth.hpp"

#include "langdiar/manifest.hpp"
#include "langdiar/wav.hpp"

#include <cmath>
#include <filesystem>

namespace langdiar {

namespace {

struct Formant {
  double f1, f2;
};

// Two disjoint spectral families keyed by the language-code hash, so any two
// codes of different parity are cleanly separable.
std::vector<Formant> phone_inventory(const std::string& language) {
  uint64_t h = fnv1a(language);
  Rng rng(h | 1);
  bool low_family = (h % 2) == 0;
  std::vector<Formant> phones;
  for (int i = 0; i < 5; ++i) {
    Formant f;
    if (low_family) {
      f.f1 = rng.uniform(260.0, 520.0);
      f.f2 = rng.uniform(1900.0, 2700.0);
    } else {
      f.f1 = rng.uniform(620.0, 950.0);
      f.f2 = rng.uniform(1050.0, 1650.0);
    }
    phones.push_back(f);
  }
  return phones;
}

// second-order resonator applied in place
void resonate(std::vector<double>& x, double freq, double bw_hz, int sample_rate) {
  double r = std::exp(-M_PI * bw_hz / sample_rate);
  double theta = 2.0 * M_PI * freq / sample_rate;
  double a1 = -2.0 * r * std::cos(theta);
  double a2 = r * r;
  double y1 = 0.0, y2 = 0.0;
  for (double& v : x) {
    double y = v - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

void normalize_rms(std::vector<double>& x, double target_rms) {
  double p = 0.0;
  for (double v : x) p += v * v;
  p = std::sqrt(p / static_cast<double>(x.size()));
  if (p > 0)
    for (double& v : x) v *= target_rms / p;
}

}  // namespace

WaveformBuffer synth_speech(const std::string& language, int speaker, double seconds,
                            uint64_t seed, int sample_rate) {
  if (seconds <= 0) fail("synth_speech: seconds must be positive");
  auto phones = phone_inventory(language);
  Rng rng(mix_seed(seed, fnv1a(language) + static_cast<uint64_t>(speaker) * 7919));
  double f0 = 95.0 + 18.0 * (speaker % 8) + rng.uniform(-4.0, 4.0);

  long n = static_cast<long>(std::llround(seconds * sample_rate));
  WaveformBuffer out;
  out.sample_rate = sample_rate;
  out.source_id = strfmt("%s_spk%d_%llu", language.c_str(), speaker,
                         static_cast<unsigned long long>(seed));
  out.samples.assign(static_cast<size_t>(n), 0.0);

  long pos = 0;
  while (pos < n) {
    long phone_len = static_cast<long>(rng.uniform(0.08, 0.2) * sample_rate);
    phone_len = std::min(phone_len, n - pos);
    const Formant& ph = phones[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(phones.size()) - 1))];

    // glottal-like impulse train with slight jitter, plus a whisper of noise
    std::vector<double> seg(static_cast<size_t>(phone_len), 0.0);
    double period = sample_rate / (f0 * rng.uniform(0.95, 1.05));
    for (double p = 0.0; p < static_cast<double>(phone_len); p += period)
      seg[static_cast<size_t>(p)] = 1.0;
    for (auto& v : seg) v += 0.02 * rng.normal();
    resonate(seg, ph.f1, 90.0, sample_rate);
    resonate(seg, ph.f2, 120.0, sample_rate);
    normalize_rms(seg, 0.15);

    long attack = std::min<long>(phone_len / 8, sample_rate / 100);
    for (long i = 0; i < phone_len; ++i) {
      double env = 1.0;
      if (i < attack && attack > 0) env = static_cast<double>(i) / attack;
      if (i >= phone_len - attack && attack > 0) env = static_cast<double>(phone_len - i) / attack;
      out.samples[static_cast<size_t>(pos + i)] = seg[static_cast<size_t>(i)] * env;
    }
    pos += phone_len;
  }
  double peak = 0.0;
  for (double v : out.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.98)
    for (double& v : out.samples) v *= 0.98 / peak;
  return out;
}

WaveformBuffer synth_noise(const std::string& kind, double seconds, uint64_t seed,
                           int sample_rate) {
  if (seconds <= 0) fail("synth_noise: seconds must be positive");
  Rng rng(mix_seed(seed, fnv1a(kind)));
  long n = static_cast<long>(std::llround(seconds * sample_rate));
  WaveformBuffer out;
  out.sample_rate = sample_rate;
  out.source_id = strfmt("noise_%s_%llu", kind.c_str(), static_cast<unsigned long long>(seed));
  out.samples.assign(static_cast<size_t>(n), 0.0);

  if (kind == "white") {
    for (auto& v : out.samples) v = rng.normal();
  } else if (kind == "hum") {
    for (long i = 0; i < n; ++i) {
      double t = static_cast<double>(i) / sample_rate;
      out.samples[static_cast<size_t>(i)] = std::sin(2 * M_PI * 50.0 * t) +
                                            0.5 * std::sin(2 * M_PI * 150.0 * t) +
                                            0.3 * rng.normal();
    }
  } else if (kind == "babble") {
    // band-limited noise with slow amplitude modulation
    std::vector<double> base(static_cast<size_t>(n));
    for (auto& v : base) v = rng.normal();
    resonate(base, 500.0, 400.0, sample_rate);
    double mod_rate = rng.uniform(2.0, 5.0);
    for (long i = 0; i < n; ++i) {
      double t = static_cast<double>(i) / sample_rate;
      out.samples[static_cast<size_t>(i)] =
          base[static_cast<size_t>(i)] * (0.6 + 0.4 * std::sin(2 * M_PI * mod_rate * t));
    }
  } else {
    fail(strfmt("synth_noise: unknown kind '%s'", kind.c_str()));
  }
  normalize_rms(out.samples, 0.1);
  return out;
}

WaveformBuffer synth_rir(double decay_seconds, uint64_t seed, int sample_rate) {
  if (decay_seconds <= 0) fail("synth_rir: decay must be positive");
  Rng rng(mix_seed(seed, 0x5152));
  long n = static_cast<long>(std::llround(3.0 * decay_seconds * sample_rate));
  n = std::max<long>(n, 64);
  WaveformBuffer out;
  out.sample_rate = sample_rate;
  out.source_id = strfmt("rir_%llu", static_cast<unsigned long long>(seed));
  out.samples.assign(static_cast<size_t>(n), 0.0);
  out.samples[0] = 1.0;
  for (long i = sample_rate / 250; i < n; ++i) {
    double t = static_cast<double>(i) / sample_rate;
    out.samples[static_cast<size_t>(i)] = rng.normal() * 0.35 * std::exp(-t / decay_seconds);
  }
  return out;
}

std::string build_toy_pool(const std::string& dir, const std::string& language,
                           int n_utterances, int n_speakers, double min_seconds,
                           double max_seconds, uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Rng rng(mix_seed(seed, fnv1a(language)));
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < n_utterances; ++i) {
    int speaker = i % std::max(1, n_speakers);
    double secs = rng.uniform(min_seconds, max_seconds);
    WaveformBuffer wav = synth_speech(language, speaker, secs, mix_seed(seed, static_cast<uint64_t>(i)));
    std::string rel = strfmt("%s_%03d.wav", language.c_str(), i);
    write_wav(wav, (fs::path(dir) / rel).string());
    ManifestEntry e;
    e.audio = rel;
    e.language = language;
    e.duration = wav.duration();
    e.speaker = strfmt("%s_spk%d", language.c_str(), speaker);
    entries.push_back(std::move(e));
  }
  std::string manifest = (fs::path(dir) / "manifest.jsonl").string();
  write_manifest(entries, manifest);
  return manifest;
}

}  // namespace langdiar
