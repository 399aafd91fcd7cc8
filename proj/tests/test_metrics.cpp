#include "doctest.h"
#include "langdiar/metrics.hpp"
#include "testutil.hpp"

using namespace langdiar;
using namespace langdiar::testutil;

namespace {

SegmentAnnotation ann(const std::string& rec,
                      std::initializer_list<std::tuple<double, double, const char*>> segs) {
  SegmentAnnotation a;
  a.recording_id = rec;
  for (auto& [s, e, l] : segs) a.segments.push_back({s, e, l});
  a.normalize();
  return a;
}

// independent frame-counting oracle: per-frame membership from raw segments
DERBreakdown oracle_score(const SegmentAnnotation& ref, const SegmentAnnotation& hyp,
                          const std::vector<std::string>& langs, double fp, bool ideal) {
  double dur = std::max(ref.max_end(), hyp.max_end());
  long frames = static_cast<long>(std::floor(dur / fp + 1e-9));
  auto active = [&](const SegmentAnnotation& a, const std::string& lang, long t) {
    double c = (t + 0.5) * fp;
    for (const auto& s : a.segments)
      if (s.label == lang && c >= s.start && c < s.end) return true;
    return false;
  };
  long fa = 0, miss = 0, conf = 0, ref_speech = 0;
  for (long t = 0; t < frames; ++t) {
    std::vector<int> ref_set, hyp_set;
    for (size_t li = 0; li < langs.size(); ++li) {
      if (active(ref, langs[li], t)) ref_set.push_back(static_cast<int>(li));
      if (active(hyp, langs[li], t)) hyp_set.push_back(static_cast<int>(li));
    }
    bool rs = !ref_set.empty();
    if (rs) ref_speech++;
    if (ideal) {
      if (!rs) continue;            // gated away: no FA possible
      if (hyp_set.empty()) {        // fill rule: lowest channel wins on all-zero ties
        hyp_set.push_back(0);
      }
    }
    if (!rs) {
      if (!hyp_set.empty()) fa++;
      continue;
    }
    if (hyp_set.empty()) {
      miss++;
      continue;
    }
    // binary hypothesis: every active channel ties at the top, so the frame
    // is correct iff the active sets intersect
    bool match = false;
    for (int r : ref_set)
      for (int h : hyp_set)
        if (r == h) match = true;
    if (!match) conf++;
  }
  DERBreakdown b;
  b.false_alarm = static_cast<double>(fa) / ref_speech;
  b.miss = static_cast<double>(miss) / ref_speech;
  b.confusion = static_cast<double>(conf) / ref_speech;
  b.der = b.false_alarm + b.miss + b.confusion;
  b.scored_frames = ref_speech;
  return b;
}

SegmentAnnotation random_hyp(Rng& rng, const std::vector<std::string>& langs, double dur,
                             double fp) {
  SegmentAnnotation a;
  a.recording_id = "r";
  long frames = static_cast<long>(dur / fp);
  int n = rng.uniform_int(1, 5);
  for (int i = 0; i < n; ++i) {
    long s = rng.uniform_int(0, static_cast<int>(frames) - 1);
    long e = rng.uniform_int(static_cast<int>(s) + 1, static_cast<int>(frames));
    a.segments.push_back(
        {s * fp, e * fp, langs[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(langs.size()) - 1))]});
  }
  a.normalize();
  return a;
}

}  // namespace

TEST_CASE("score: identical annotations give zero DER") {
  auto ref = ann("r", {{0.0, 4.0, "en"}, {4.0, 10.0, "hi"}});
  ScoringConfig cfg;
  DERBreakdown b = score(ref, ref, cfg);
  CHECK(b.der == 0.0);
  CHECK(b.false_alarm == 0.0);
  CHECK(b.miss == 0.0);
  CHECK(b.confusion == 0.0);
  CHECK(b.scored_frames == 400);
}

TEST_CASE("score: constructed 20% miss case") {
  auto ref = ann("r", {{0.0, 10.0, "A"}});
  auto hyp = ann("r", {{0.0, 8.0, "A"}});
  ScoringConfig cfg;
  DERBreakdown b = score(ref, hyp, cfg);
  CHECK(b.miss == doctest::Approx(0.20));
  CHECK(b.false_alarm == 0.0);
  CHECK(b.confusion == 0.0);
  CHECK(b.der == doctest::Approx(0.20));
}

TEST_CASE("score: total confusion in ideal mode") {
  auto ref = ann("r", {{0.0, 10.0, "A"}});
  auto hyp = ann("r", {{0.0, 10.0, "B"}});
  ScoringConfig cfg;
  cfg.mode = ScoringMode::kIdeal;
  DERBreakdown b = score(ref, hyp, cfg);
  CHECK(b.confusion == doctest::Approx(1.0));
  CHECK(b.der == doctest::Approx(1.0));
  CHECK(b.false_alarm == 0.0);
  CHECK(b.miss == 0.0);
}

TEST_CASE("score: empty reference speech is rejected") {
  SegmentAnnotation ref;
  ref.recording_id = "empty";
  auto hyp = ann("empty", {{0.0, 1.0, "A"}});
  ScoringConfig cfg;
  CHECK_THROWS_AS(score(ref, hyp, cfg), Error);
}

TEST_CASE("score_corpus: duration weighting") {
  auto ref1 = ann("a", {{0.0, 10.0, "A"}});
  auto hyp1 = ann("a", {{0.0, 10.0, "A"}});       // DER 0
  auto ref2 = ann("b", {{0.0, 30.0, "A"}});
  auto hyp2 = ann("b", {{0.0, 18.0, "A"}});       // miss 0.4
  ScoringConfig cfg;
  DERBreakdown b = score_corpus({{ref1, hyp1}, {ref2, hyp2}}, cfg);
  CHECK(b.der == doctest::Approx(0.3));
  CHECK(b.scored_frames == 1600);

  DERBreakdown single = score_corpus({{ref2, hyp2}}, cfg);
  DERBreakdown direct = score(ref2, hyp2, cfg);
  CHECK(single.der == doctest::Approx(direct.der));

  CHECK_THROWS_AS(score_corpus({}, cfg), Error);

  SegmentAnnotation bad;
  bad.recording_id = "badrec";
  CHECK_THROWS_WITH_AS(score_corpus({{bad, hyp1}}, cfg), doctest::Contains("badrec"), Error);
}

TEST_CASE("apply_oracle_vad: identity when VADs agree, fill rule, FA elimination") {
  LanguageInventory inv = LanguageInventory::from_codes({"A", "B"});
  auto ref = ann("r", {{0.0, 1.0, "A"}});
  LabelMatrix ref_m = segments_to_label_matrix(ref, inv, 0.025, 1.0);

  LabelMatrix hyp = ref_m;  // same VAD
  LabelMatrix gated = apply_oracle_vad(hyp, ref_m.values.row(0));
  CHECK((gated.values - hyp.values).cwiseAbs().maxCoeff() == 0.0);

  // all-silent hypothesis with raw scores favoring B -> B everywhere
  LabelMatrix silent;
  silent.frame_period = 0.025;
  silent.channel_roles = {kVadLabel, "A", "B"};
  silent.values = Mat::Zero(3, 40);
  silent.values.row(2).setConstant(0.4);  // raw scores below threshold
  silent.values.row(1).setConstant(0.2);
  LabelMatrix filled = apply_oracle_vad(silent, ref_m.values.row(0));
  for (long t = 0; t < 40; ++t) {
    CHECK(filled.values(0, t) == 1.0);
    CHECK(filled.values(2, t) == 1.0);
    CHECK(filled.values(1, t) == 0.0);
  }

  Mat short_vad = Mat::Ones(1, 10);
  CHECK_THROWS_AS(apply_oracle_vad(silent, short_vad), Error);
}

TEST_CASE("ideal mode: FA and Miss are identically zero on random instances") {
  Rng rng(31);
  std::vector<std::string> langs = {"A", "B", "C"};
  ScoringConfig cfg;
  cfg.mode = ScoringMode::kIdeal;
  cfg.inventory = langs;
  for (int it = 0; it < 60; ++it) {
    double dur = rng.uniform_int(8, 40) * 0.025;
    SegmentAnnotation ref = random_hyp(rng, langs, dur, 0.025);
    SegmentAnnotation hyp = random_hyp(rng, langs, dur, 0.025);
    if (ref.segments.empty()) continue;
    DERBreakdown b = score(ref, hyp, cfg);
    CHECK(b.false_alarm == 0.0);
    CHECK(b.miss == 0.0);
    CHECK(b.der == b.confusion);
  }
}

TEST_CASE("frame-counting oracle agreement on random annotation pairs") {
  Rng rng(32);
  std::vector<std::string> langs = {"A", "B"};
  for (int it = 0; it < 200; ++it) {
    double dur = rng.uniform_int(10, 60) * 0.025;
    SegmentAnnotation ref = random_hyp(rng, langs, dur, 0.025);
    SegmentAnnotation hyp = random_hyp(rng, langs, dur, 0.025);
    if (ref.segments.empty()) continue;
    for (bool ideal : {false, true}) {
      ScoringConfig cfg;
      cfg.mode = ideal ? ScoringMode::kIdeal : ScoringMode::kPractical;
      cfg.inventory = langs;
      DERBreakdown got = score(ref, hyp, cfg);
      DERBreakdown want = oracle_score(ref, hyp, langs, 0.025, ideal);
      CHECK(got.scored_frames == want.scored_frames);
      CHECK(got.false_alarm == doctest::Approx(want.false_alarm).epsilon(1e-12));
      CHECK(got.miss == doctest::Approx(want.miss).epsilon(1e-12));
      CHECK(got.confusion == doctest::Approx(want.confusion).epsilon(1e-12));
      // decomposition identity, exact
      CHECK(got.der == got.false_alarm + got.miss + got.confusion);
    }
  }
}

TEST_CASE("label-swap symmetry") {
  Rng rng(33);
  std::vector<std::string> langs = {"A", "B"};
  ScoringConfig cfg;
  cfg.inventory = langs;
  for (int it = 0; it < 40; ++it) {
    double dur = rng.uniform_int(10, 50) * 0.025;
    SegmentAnnotation ref = random_hyp(rng, langs, dur, 0.025);
    SegmentAnnotation hyp = random_hyp(rng, langs, dur, 0.025);
    if (ref.segments.empty()) continue;
    DERBreakdown base = score(ref, hyp, cfg);

    auto swap_labels = [](SegmentAnnotation a) {
      for (auto& s : a.segments) s.label = s.label == "A" ? "B" : "A";
      return a;
    };
    DERBreakdown swapped = score(swap_labels(ref), swap_labels(hyp), cfg);
    CHECK(base.false_alarm == swapped.false_alarm);
    CHECK(base.miss == swapped.miss);
    CHECK(base.confusion == swapped.confusion);
  }
}

TEST_CASE("collar monotonicity: larger collars never increase any component") {
  Rng rng(34);
  std::vector<std::string> langs = {"A", "B"};
  for (int it = 0; it < 30; ++it) {
    double dur = rng.uniform_int(20, 60) * 0.025;
    SegmentAnnotation ref = random_hyp(rng, langs, dur, 0.025);
    SegmentAnnotation hyp = random_hyp(rng, langs, dur, 0.025);
    if (ref.segments.empty()) continue;
    double prev_fa = 1e9, prev_miss = 1e9, prev_conf = 1e9;
    for (double collar : {0.0, 0.05, 0.15, 0.4}) {
      ScoringConfig cfg;
      cfg.inventory = langs;
      cfg.collar = collar;
      DERBreakdown b = score(ref, hyp, cfg);
      CHECK(b.false_alarm <= prev_fa + 1e-12);
      CHECK(b.miss <= prev_miss + 1e-12);
      CHECK(b.confusion <= prev_conf + 1e-12);
      prev_fa = b.false_alarm;
      prev_miss = b.miss;
      prev_conf = b.confusion;
    }
  }
}

TEST_CASE("practical mode gates language channels by the hypothesis VAD") {
  LanguageInventory inv = LanguageInventory::from_codes({"A"});
  SegmentAnnotation ref = ann("r", {{0.0, 1.0, "A"}});
  LabelMatrix ref_m = segments_to_label_matrix(ref, inv, 0.025, 1.0);

  // hypothesis claims language everywhere but VAD only on the first half
  LabelMatrix hyp;
  hyp.frame_period = 0.025;
  hyp.channel_roles = {kVadLabel, "A"};
  hyp.values = Mat::Zero(2, 40);
  hyp.values.row(1).setOnes();
  hyp.values.block(0, 0, 1, 20).setOnes();

  ScoringConfig cfg;
  DERBreakdown b = score_matrices(ref_m, hyp, cfg);
  CHECK(b.miss == doctest::Approx(0.5));  // second half gated away
  CHECK(b.false_alarm == 0.0);
}

TEST_CASE("multi-label policy: overlap counts as covered") {
  ScoringConfig cfg;
  cfg.overlap_policy = OverlapPolicy::kMultiLabel;
  cfg.inventory = {"A", "B"};
  auto ref = ann("r", {{0.0, 1.0, "A"}});
  auto hyp = ann("r", {{0.0, 1.0, "A"}, {0.0, 1.0, "B"}});
  DERBreakdown b = score(ref, hyp, cfg);
  CHECK(b.confusion == 0.0);
  CHECK(b.der == 0.0);

  ScoringConfig argmax_cfg;
  argmax_cfg.inventory = {"A", "B"};
  DERBreakdown a = score(ref, hyp, argmax_cfg);
  // argmax with the ref-favoring tie rule also scores this as covered
  CHECK(a.confusion == 0.0);
}
