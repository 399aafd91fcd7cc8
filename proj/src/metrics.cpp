#include "langdiar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace langdiar {

namespace {

struct FrameCounts {
  long fa = 0, miss = 0, conf = 0;
  long ref_speech = 0;  // denominator, not collar-filtered

  DERBreakdown to_breakdown() const {
    if (ref_speech == 0) fail("score: reference has no speech frames");
    DERBreakdown b;
    double denom = static_cast<double>(ref_speech);
    b.false_alarm = static_cast<double>(fa) / denom;
    b.miss = static_cast<double>(miss) / denom;
    b.confusion = static_cast<double>(conf) / denom;
    b.der = b.false_alarm + b.miss + b.confusion;
    b.scored_frames = ref_speech;
    return b;
  }
};

std::vector<std::string> merged_inventory(const ScoringConfig& config,
                                          const SegmentAnnotation& reference,
                                          const SegmentAnnotation& hypothesis) {
  std::vector<std::string> codes = config.inventory;
  auto add = [&codes](const std::string& c) {
    if (c != kVadLabel && std::find(codes.begin(), codes.end(), c) == codes.end())
      codes.push_back(c);
  };
  for (const auto& s : reference.segments) add(s.label);
  for (const auto& s : hypothesis.segments) add(s.label);
  return codes;
}

FrameCounts count_frames(const LabelMatrix& ref, const LabelMatrix& hyp,
                         const ScoringConfig& config, const std::vector<double>& boundaries) {
  if (ref.frames() != hyp.frames()) fail("score: frame-grid mismatch");
  long frames = ref.frames();
  long c = hyp.channels() - 1;

  FrameCounts counts;
  for (long t = 0; t < frames; ++t) {
    bool ref_speech = ref.values(0, t) >= 0.5;
    if (ref_speech) counts.ref_speech += 1;

    if (config.collar > 0.0) {
      double center = (t + 0.5) * config.frame_period;
      bool excluded = false;
      for (double b : boundaries)
        if (std::abs(center - b) <= config.collar) {
          excluded = true;
          break;
        }
      if (excluded) continue;
    }

    bool hyp_any = false;
    for (long ch = 1; ch <= c; ++ch) hyp_any = hyp_any || hyp.values(ch, t) >= 0.5;

    if (!ref_speech) {
      if (hyp_any) counts.fa += 1;
      continue;
    }
    if (!hyp_any) {
      counts.miss += 1;
      continue;
    }

    // both speak: a frame is correct when a top-scoring hypothesis channel
    // (argmax) or any active hypothesis channel (multi-label) is among the
    // reference languages; set-based, so consistent label swaps are symmetric
    bool match = false;
    bool ref_has_lang = false;
    if (config.overlap_policy == OverlapPolicy::kArgmax) {
      double best = 0.0;
      for (long ch = 1; ch <= c; ++ch) best = std::max(best, hyp.values(ch, t));
      for (long ch = 1; ch <= c; ++ch) {
        bool ref_active = ref.values(ch, t) >= 0.5;
        ref_has_lang = ref_has_lang || ref_active;
        if (ref_active && hyp.values(ch, t) == best) match = true;
      }
    } else {
      for (long ch = 1; ch <= c; ++ch) {
        bool ref_active = ref.values(ch, t) >= 0.5;
        ref_has_lang = ref_has_lang || ref_active;
        if (ref_active && hyp.values(ch, t) >= 0.5) match = true;
      }
    }
    if (!ref_has_lang) continue;  // reference speech without language: unscored
    if (!match) counts.conf += 1;
  }
  return counts;
}

FrameCounts score_matrices_counts(const LabelMatrix& reference, LabelMatrix hypothesis,
                                  const ScoringConfig& config,
                                  const std::vector<double>& boundaries) {
  if (reference.frames() != hypothesis.frames()) fail("score: frame-grid mismatch");
  if (reference.channels() - 1 != hypothesis.channels() - 1)
    fail("score: reference/hypothesis inventories differ");

  if (config.mode == ScoringMode::kIdeal) {
    hypothesis = apply_oracle_vad(hypothesis, reference.values.row(0));
  } else {
    // practical mode: gate language channels by the hypothesis's own VAD
    for (long t = 0; t < hypothesis.frames(); ++t)
      if (hypothesis.values(0, t) < 0.5)
        for (long ch = 1; ch < hypothesis.channels(); ++ch) hypothesis.values(ch, t) = 0.0;
  }
  return count_frames(reference, hypothesis, config, boundaries);
}

std::vector<double> reference_boundaries(const SegmentAnnotation& reference) {
  std::vector<double> b;
  for (const auto& s : reference.segments) {
    b.push_back(s.start);
    b.push_back(s.end);
  }
  return b;
}

FrameCounts score_pair_counts(const SegmentAnnotation& reference,
                              const SegmentAnnotation& hypothesis,
                              const ScoringConfig& config) {
  config.validate();
  std::vector<std::string> codes = merged_inventory(config, reference, hypothesis);
  if (codes.empty()) fail(strfmt("score[%s]: no languages present", reference.recording_id.c_str()));
  LanguageInventory inv = LanguageInventory::from_codes(codes);
  double dur = std::max(reference.max_end(), hypothesis.max_end());
  if (dur < config.frame_period)
    fail(strfmt("score[%s]: reference has no speech frames", reference.recording_id.c_str()));
  LabelMatrix ref = segments_to_label_matrix(reference, inv, config.frame_period, dur);
  LabelMatrix hyp = segments_to_label_matrix(hypothesis, inv, config.frame_period, dur);
  return score_matrices_counts(ref, hyp, config, reference_boundaries(reference));
}

}  // namespace

void ScoringConfig::validate() const {
  if (collar < 0) fail("ScoringConfig: collar must be >= 0");
  if (frame_period <= 0) fail("ScoringConfig: frame_period must be positive");
}

LabelMatrix apply_oracle_vad(const LabelMatrix& hypothesis, const Mat& reference_vad) {
  if (reference_vad.rows() != 1 || reference_vad.cols() != hypothesis.frames())
    fail("apply_oracle_vad: frame-grid mismatch");
  LabelMatrix out = hypothesis;
  long c = out.channels() - 1;
  for (long t = 0; t < out.frames(); ++t) {
    bool speech = reference_vad(0, t) >= 0.5;
    out.values(0, t) = speech ? 1.0 : 0.0;
    if (!speech) {
      for (long ch = 1; ch <= c; ++ch) out.values(ch, t) = 0.0;
      continue;
    }
    bool any = false;
    for (long ch = 1; ch <= c; ++ch) any = any || out.values(ch, t) >= 0.5;
    if (!any && c > 0) {
      // fill with the highest-scoring raw language so gating never creates a
      // miss; ties go to the lowest channel
      long arg = 1;
      double best = out.values(1, t);
      for (long ch = 2; ch <= c; ++ch)
        if (out.values(ch, t) > best) {
          best = out.values(ch, t);
          arg = ch;
        }
      for (long ch = 1; ch <= c; ++ch) out.values(ch, t) = ch == arg ? 1.0 : 0.0;
    }
  }
  return out;
}

DERBreakdown score_matrices(const LabelMatrix& reference, const LabelMatrix& hypothesis,
                            const ScoringConfig& config,
                            const std::vector<double>& boundary_times) {
  config.validate();
  return score_matrices_counts(reference, hypothesis, config, boundary_times).to_breakdown();
}

DERBreakdown score(const SegmentAnnotation& reference, const SegmentAnnotation& hypothesis,
                   const ScoringConfig& config) {
  return score_pair_counts(reference, hypothesis, config).to_breakdown();
}

DERBreakdown score_corpus(
    const std::vector<std::pair<SegmentAnnotation, SegmentAnnotation>>& pairs,
    const ScoringConfig& config) {
  if (pairs.empty()) fail("score_corpus: empty pair list");
  FrameCounts total;
  for (const auto& [ref, hyp] : pairs) {
    try {
      FrameCounts c = score_pair_counts(ref, hyp, config);
      if (c.ref_speech == 0) fail("reference has no speech frames");
      total.fa += c.fa;
      total.miss += c.miss;
      total.conf += c.conf;
      total.ref_speech += c.ref_speech;
    } catch (const Error& e) {
      fail(strfmt("score_corpus[%s]: %s", ref.recording_id.c_str(), e.what()));
    }
  }
  return total.to_breakdown();
}

std::string format_der_report(const DERBreakdown& ideal, const DERBreakdown& practical) {
  std::string out;
  out += "mode        DER    (FA   / Miss / Conf)\n";
  out += strfmt("ideal      %5.2f  (%4.2f / %4.2f / %5.2f)\n", 100.0 * ideal.der,
                100.0 * ideal.false_alarm, 100.0 * ideal.miss, 100.0 * ideal.confusion);
  out += strfmt("practical  %5.2f  (%4.2f / %4.2f / %5.2f)\n", 100.0 * practical.der,
                100.0 * practical.false_alarm, 100.0 * practical.miss,
                100.0 * practical.confusion);
  return out;
}

}  // namespace langdiar
