#include "doctest.h"
#include "langdiar/simulator.hpp"
#include "langdiar/rttm.hpp"
#include "langdiar/synth.hpp"
#include "langdiar/wav.hpp"
#include "testutil.hpp"

#include <filesystem>

using namespace langdiar;
using namespace langdiar::testutil;

namespace {

UtterancePool toy_pool(uint64_t seed, int per_lang = 6, double min_s = 4.0, double max_s = 9.0) {
  UtterancePool pool;
  Rng rng(seed);
  for (const std::string& lang : {"aa", "bb"}) {
    for (int i = 0; i < per_lang; ++i) {
      PoolEntry e;
      e.audio = synth_speech(lang, i % 3, rng.uniform(min_s, max_s), mix_seed(seed, i));
      e.language = lang;
      e.speaker = strfmt("%s_spk%d", lang.c_str(), i % 3);
      pool.push_back(std::move(e));
    }
  }
  return pool;
}

SimulationRecipe base_recipe(uint64_t seed = 7) {
  SimulationRecipe r;
  r.matrix_language = "aa";
  r.embedded_languages = {"bb"};
  r.target_duration = 10.0;
  r.embedded_ratio = 0.3;
  r.seed = seed;
  return r;
}

double measured_embedded_fraction(const SimulatedUtterance& utt,
                                  const std::vector<std::string>& embedded) {
  double emb = 0.0;
  for (const auto& s : utt.labels.segments)
    if (std::find(embedded.begin(), embedded.end(), s.label) != embedded.end())
      emb += s.end - s.start;
  return emb / utt.audio.duration();
}

double measure_snr_db(const std::vector<double>& clean, const std::vector<double>& mixed) {
  // independent power meter: noise = mixed - clean (up to a common rescale)
  double scale_num = 0.0, scale_den = 0.0;
  for (size_t i = 0; i < clean.size(); ++i) {
    scale_num += mixed[i] * clean[i];
    scale_den += clean[i] * clean[i];
  }
  double a = scale_num / scale_den;  // projection of mix onto clean
  double pc = 0.0, pn = 0.0;
  for (size_t i = 0; i < clean.size(); ++i) {
    double c = a * clean[i];
    double n = mixed[i] - c;
    pc += c * c;
    pn += n * n;
  }
  return 10.0 * std::log10(pc / pn);
}

}  // namespace

TEST_CASE("build_utterance: embedded fraction within the stated tolerance") {
  UtterancePool pool = toy_pool(1);
  for (uint64_t seed : {3ull, 4ull, 5ull, 6ull, 7ull}) {
    SimulationRecipe r = base_recipe(seed);
    SimulatedUtterance utt = build_utterance(r, pool);
    double frac = measured_embedded_fraction(utt, r.embedded_languages);
    CHECK(frac >= 0.27);
    CHECK(frac <= 0.33);
    // alternation: embedded spans never adjacent
    for (size_t i = 1; i < utt.labels.segments.size(); ++i) {
      bool prev_emb = utt.labels.segments[i - 1].label == "bb";
      bool cur_emb = utt.labels.segments[i].label == "bb";
      CHECK(!(prev_emb && cur_emb));
    }
    // labels tile [0, duration]
    CHECK(utt.labels.segments.front().start == 0.0);
    CHECK(utt.labels.segments.back().end == doctest::Approx(utt.audio.duration()));
    for (size_t i = 1; i < utt.labels.segments.size(); ++i)
      CHECK(utt.labels.segments[i].start == doctest::Approx(utt.labels.segments[i - 1].end));
  }
}

TEST_CASE("build_utterance: negligible embedded budget degenerates to one monolingual span") {
  UtterancePool pool = toy_pool(2, 4, 9.0, 12.0);
  SimulationRecipe r = base_recipe(11);
  r.target_duration = 8.0;
  r.embedded_ratio = 0.01;  // 0.08 s budget, below min_embedded_total
  SimulatedUtterance utt = build_utterance(r, pool);
  REQUIRE(utt.labels.segments.size() == 1);
  CHECK(utt.labels.segments[0].label == "aa");
  CHECK(utt.provenance.size() == 1);
}

TEST_CASE("build_utterance: deterministic under a fixed seed") {
  UtterancePool pool = toy_pool(3);
  SimulationRecipe r = base_recipe(42);
  SimulatedUtterance a = build_utterance(r, pool);
  SimulatedUtterance b = build_utterance(r, pool);
  REQUIRE(a.audio.samples.size() == b.audio.samples.size());
  CHECK(std::equal(a.audio.samples.begin(), a.audio.samples.end(), b.audio.samples.begin()));
  REQUIRE(a.labels.segments.size() == b.labels.segments.size());
  for (size_t i = 0; i < a.labels.segments.size(); ++i) {
    CHECK(a.labels.segments[i].start == b.labels.segments[i].start);
    CHECK(a.labels.segments[i].end == b.labels.segments[i].end);
    CHECK(a.labels.segments[i].label == b.labels.segments[i].label);
  }
}

TEST_CASE("build_utterance: rejections") {
  UtterancePool pool = toy_pool(4);
  SimulationRecipe r = base_recipe();
  r.embedded_languages = {"zz"};
  CHECK_THROWS_WITH_AS(build_utterance(r, pool), doctest::Contains("zz"), Error);

  UtterancePool tiny;
  PoolEntry e;
  e.audio = synth_speech("aa", 0, 1.0, 1);
  e.language = "aa";
  tiny.push_back(e);
  PoolEntry e2;
  e2.audio = synth_speech("bb", 0, 1.0, 2);
  e2.language = "bb";
  tiny.push_back(e2);
  SimulationRecipe big = base_recipe();
  big.target_duration = 60.0;  // unreachable from 2 s of material
  CHECK_THROWS_WITH_AS(build_utterance(big, tiny), doctest::Contains("unreachable"), Error);
}

TEST_CASE("build_utterance: provenance records speakers and sources") {
  UtterancePool pool = toy_pool(5);
  SimulationRecipe r = base_recipe(9);
  SimulatedUtterance utt = build_utterance(r, pool);
  REQUIRE(utt.provenance.size() == utt.labels.segments.size());
  for (size_t i = 0; i < utt.provenance.size(); ++i) {
    const auto& p = utt.provenance[i];
    CHECK(p.language == utt.labels.segments[i].label);
    CHECK(!p.source_id.empty());
    CHECK(!p.speaker.empty());
    CHECK(p.source_end > p.source_start);
  }
}

TEST_CASE("mix_noise: exact SNR definition and power-meter oracle") {
  Rng rng(6);
  WaveformBuffer clean = synth_speech("aa", 0, 2.0, 31);
  WaveformBuffer noise = synth_noise("white", 0.7, 32);  // shorter: exercises looping

  for (double snr : {0.0, 5.0, 10.0, 15.0, 20.0}) {
    WaveformBuffer mixed = mix_noise(clean, noise, snr);
    REQUIRE(mixed.samples.size() == clean.samples.size());
    CHECK(std::abs(measure_snr_db(clean.samples, mixed.samples) - snr) < 0.1);
  }

  WaveformBuffer silent;
  silent.sample_rate = 16000;
  silent.samples.assign(1000, 0.0);
  CHECK_THROWS_WITH_AS(mix_noise(silent, noise, 10.0), doctest::Contains("zero power"), Error);
}

TEST_CASE("apply_rir: identity and delayed impulse kernels") {
  WaveformBuffer clean = synth_speech("bb", 1, 0.5, 33);
  WaveformBuffer delta;
  delta.sample_rate = 16000;
  delta.samples.assign(64, 0.0);
  delta.samples[0] = 1.0;
  WaveformBuffer out = apply_rir(clean, delta);
  REQUIRE(out.samples.size() == clean.samples.size());
  for (size_t i = 0; i < out.samples.size(); ++i)
    CHECK(out.samples[i] == doctest::Approx(clean.samples[i]).epsilon(1e-6));

  const int kDelay = 37;
  WaveformBuffer shifted_rir;
  shifted_rir.sample_rate = 16000;
  shifted_rir.samples.assign(64, 0.0);
  shifted_rir.samples[kDelay] = 1.0;
  WaveformBuffer out2 = apply_rir(clean, shifted_rir);
  // energy normalization compensates the truncated tail; compare shapes
  double num = 0.0, den_a = 0.0, den_b = 0.0;
  for (size_t i = kDelay; i < out2.samples.size(); ++i) {
    num += out2.samples[i] * clean.samples[i - kDelay];
    den_a += out2.samples[i] * out2.samples[i];
    den_b += clean.samples[i - kDelay] * clean.samples[i - kDelay];
  }
  CHECK(num / std::sqrt(den_a * den_b) == doctest::Approx(1.0).epsilon(1e-9));

  WaveformBuffer zeros;
  zeros.sample_rate = 16000;
  zeros.samples.assign(32, 0.0);
  CHECK_THROWS_WITH_AS(apply_rir(clean, zeros), doctest::Contains("all-zero"), Error);
}

TEST_CASE("apply_rir: transform-based convolution matches the direct oracle") {
  Rng rng(7);
  WaveformBuffer clean;
  clean.sample_rate = 16000;
  for (int i = 0; i < 2000; ++i) clean.samples.push_back(rng.normal() * 0.2);
  WaveformBuffer rir;
  rir.sample_rate = 16000;
  for (int i = 0; i < 300; ++i) rir.samples.push_back(rng.normal() * std::exp(-i / 60.0));

  WaveformBuffer out = apply_rir(clean, rir);

  // direct O(N*M) convolution, then the same RMS normalization
  std::vector<double> direct(clean.samples.size(), 0.0);
  for (size_t i = 0; i < clean.samples.size(); ++i)
    for (size_t j = 0; j < rir.samples.size() && j <= i; ++j)
      direct[i] += clean.samples[i - j] * rir.samples[j];
  double pin = 0, pout = 0;
  for (double v : clean.samples) pin += v * v;
  for (double v : direct) pout += v * v;
  double g = std::sqrt(pin / pout);
  for (double& v : direct) v *= g;

  for (size_t i = 0; i < direct.size(); ++i)
    CHECK(std::abs(direct[i] - out.samples[i]) < 1e-5);
}

TEST_CASE("augment: probability 0 is identity, probability 1 is deterministic") {
  UtterancePool pool = toy_pool(8, 4);
  SimulationRecipe r = base_recipe(17);
  r.target_duration = 6.0;
  SimulatedUtterance utt = build_utterance(r, pool);
  std::vector<WaveformBuffer> rirs = {synth_rir(0.15, 1), synth_rir(0.3, 2)};
  std::vector<WaveformBuffer> noises = {synth_noise("white", 1.0, 3),
                                        synth_noise("hum", 1.0, 4)};

  r.augment_probability = 0.0;
  SimulatedUtterance same = augment(utt, rirs, noises, r);
  CHECK(std::equal(same.audio.samples.begin(), same.audio.samples.end(),
                   utt.audio.samples.begin()));
  CHECK_FALSE(same.augmented);

  r.augment_probability = 1.0;
  SimulatedUtterance a = augment(utt, rirs, noises, r, 5);
  SimulatedUtterance b = augment(utt, rirs, noises, r, 5);
  CHECK(a.augmented);
  CHECK(a.applied_snr_db.has_value());
  CHECK(std::equal(a.audio.samples.begin(), a.audio.samples.end(), b.audio.samples.begin()));
  // labels untouched
  REQUIRE(a.labels.segments.size() == utt.labels.segments.size());
  for (size_t i = 0; i < a.labels.segments.size(); ++i)
    CHECK(a.labels.segments[i].start == utt.labels.segments[i].start);
}

TEST_CASE("augment: empirical rate over 10000 seeded draws is within the binomial band") {
  UtterancePool pool = toy_pool(9, 2, 1.0, 1.5);
  SimulationRecipe r = base_recipe(23);
  r.target_duration = 0.6;
  r.min_embedded_seconds = 0.1;
  r.max_embedded_seconds = 0.3;
  r.min_matrix_seconds = 0.1;
  r.max_matrix_seconds = 0.4;
  SimulatedUtterance utt = build_utterance(r, pool);
  std::vector<WaveformBuffer> rirs = {synth_rir(0.05, 1)};
  std::vector<WaveformBuffer> noises = {synth_noise("white", 0.3, 2)};

  r.augment_probability = 0.5;
  int fired = 0;
  const int kTrials = 10000;
  for (int i = 0; i < kTrials; ++i)
    if (augment(utt, rirs, noises, r, static_cast<uint64_t>(i)).augmented) ++fired;
  double rate = static_cast<double>(fired) / kTrials;
  CHECK(rate >= 0.47);
  CHECK(rate <= 0.53);
}

TEST_CASE("label fidelity: rasterized labels match provenance spans frame-exactly") {
  UtterancePool pool = toy_pool(10);
  SimulationRecipe r = base_recipe(29);
  SimulatedUtterance utt = build_utterance(r, pool);
  std::vector<WaveformBuffer> rirs = {synth_rir(0.2, 6)};
  std::vector<WaveformBuffer> noises = {synth_noise("babble", 1.0, 7)};
  r.augment_probability = 1.0;
  SimulatedUtterance aug = augment(utt, rirs, noises, r, 1);

  LanguageInventory inv = LanguageInventory::from_codes({"aa", "bb"}, {"bb"});
  double fp = 0.025;
  LabelMatrix m = segments_to_label_matrix(aug.labels, inv, fp, aug.audio.duration());
  for (long t = 0; t < m.frames(); ++t) {
    double center = (t + 0.5) * fp;
    std::string expect;
    for (const auto& p : aug.provenance)
      if (center >= p.out_start && center < p.out_end) expect = p.language;
    for (int c = 0; c < 2; ++c) {
      bool active = m.values(1 + c, t) == 1.0;
      bool should = expect == inv.languages[static_cast<size_t>(c)].code;
      CHECK(active == should);
    }
  }
}

TEST_CASE("command vc hook: file-in/file-out contract (cp as the identity converter)") {
  UtterancePool pool = toy_pool(11, 4);
  SimulationRecipe r = base_recipe(31);
  r.target_duration = 5.0;
  SimulatedUtterance ident = build_utterance(r, pool, identity_vc_hook());
  SimulatedUtterance via_cmd = build_utterance(r, pool, command_vc_hook("cp {in} {out}"));
  REQUIRE(ident.audio.samples.size() == via_cmd.audio.samples.size());
  // the command round-trips through 16-bit WAV quantization
  for (size_t i = 0; i < ident.audio.samples.size(); ++i)
    CHECK(std::abs(ident.audio.samples[i] - via_cmd.audio.samples[i]) <= 2.0 / 32768.0);
}

TEST_CASE("build_corpus: totals, round trips, pair histogram") {
  namespace fs = std::filesystem;
  UtterancePool pool = toy_pool(12, 8);
  CorpusSpec spec;
  SimulationRecipe ra = base_recipe();
  ra.augment_probability = 0.5;
  SimulationRecipe rb;
  rb.matrix_language = "bb";
  rb.embedded_languages = {"aa"};
  rb.embedded_ratio = 0.25;
  spec.recipes = {ra, rb};
  spec.total_hours = 0.02;  // 72 s
  spec.utterance_seconds_min = 5.0;
  spec.utterance_seconds_max = 8.0;
  spec.seed = 99;

  std::string dir = (fs::temp_directory_path() / "ld_corpus_test").string();
  fs::remove_all(dir);
  std::vector<WaveformBuffer> rirs = {synth_rir(0.15, 1)};
  std::vector<WaveformBuffer> noises = {synth_noise("white", 2.0, 2)};
  CorpusResult res = build_corpus(spec, pool, rirs, noises, dir);

  CHECK(std::abs(res.total_seconds - 72.0) <= 0.01 * 72.0 + 8.0);
  auto entries = read_manifest(res.manifest_path);
  CHECK(static_cast<long>(entries.size()) == res.utterances);

  double manifest_total = 0.0;
  long count_a = 0, count_b = 0;
  LanguageInventory inv = LanguageInventory::from_codes({"aa", "bb"});
  for (const auto& e : entries) {
    manifest_total += e.duration;
    if (e.languages[0] == "aa") ++count_a;
    if (e.languages[0] == "bb") ++count_b;
    // RTTM round trip consistent with stored provenance
    auto anns = read_rttm_file(resolve_path(res.manifest_path, e.rttm));
    REQUIRE(anns.size() == 1);
    // rttm times carry 3 decimals; the grid must cover the rounded-up end
    double grid_dur = std::max(e.duration, anns[0].max_end());
    LabelMatrix m = segments_to_label_matrix(anns[0], inv, 0.025, grid_dur);
    for (long t = 0; t < m.frames(); ++t) {
      double center = (t + 0.5) * 0.025;
      std::string expect;
      for (const auto& p : e.provenance)
        if (center >= p.out_start && center < p.out_end) expect = p.language;
      if (expect.empty()) continue;
      CHECK(m.values(1 + inv.index_of(expect), t) == 1.0);
    }
  }
  CHECK(std::abs(manifest_total - res.total_seconds) < 1e-6);
  CHECK(res.pair_counts.at("aa+bb") == count_a);
  CHECK(res.pair_counts.at("bb+aa") == count_b);
  CHECK(std::abs(count_a - count_b) <= 1);  // round-robin
  fs::remove_all(dir);
}
