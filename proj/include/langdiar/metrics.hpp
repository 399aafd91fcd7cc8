#pragma once

#include "langdiar/core.hpp"

#include <string>
#include <utility>
#include <vector>

namespace langdiar {

enum class ScoringMode { kIdeal, kPractical };
enum class OverlapPolicy { kArgmax, kMultiLabel };

struct ScoringConfig {
  ScoringMode mode = ScoringMode::kPractical;
  double collar = 0.0;        // seconds excluded around reference boundaries
  double frame_period = 0.025;
  OverlapPolicy overlap_policy = OverlapPolicy::kArgmax;
  // inventory used for the shared frame grid; empty = union of labels seen
  std::vector<std::string> inventory;

  void validate() const;
};

// Frame-based scoring. Error fractions are over the total reference speech
// frames on the grid (collar exclusion removes frames from error counting
// only, so growing the collar never increases any component).
//
// practical mode: hypothesis language channels are gated by the hypothesis
// VAD channel. ideal mode: the hypothesis VAD is replaced by the reference
// VAD; reference-speech frames with no surviving hypothesis language receive
// the hypothesis's highest-scoring language so only confusion remains.
DERBreakdown score(const SegmentAnnotation& reference, const SegmentAnnotation& hypothesis,
                   const ScoringConfig& config);

// Matrix-level entry point used when raw mask scores are available; the
// hypothesis may be non-binary (values act as scores; >= 0.5 means active).
DERBreakdown score_matrices(const LabelMatrix& reference, const LabelMatrix& hypothesis,
                            const ScoringConfig& config,
                            const std::vector<double>& boundary_times = {});

// Corpus-level aggregation: frame counts are summed across recordings first
// (time-weighted), then divided.
DERBreakdown score_corpus(
    const std::vector<std::pair<SegmentAnnotation, SegmentAnnotation>>& pairs,
    const ScoringConfig& config);

// Oracle-VAD gating. reference_vad is a 1×T mask; hypothesis language rows
// are zeroed outside it and reference-speech frames without an active
// hypothesis language get the argmax of the raw hypothesis scores.
LabelMatrix apply_oracle_vad(const LabelMatrix& hypothesis, const Mat& reference_vad);

std::string format_der_report(const DERBreakdown& ideal, const DERBreakdown& practical);

}  // namespace langdiar
