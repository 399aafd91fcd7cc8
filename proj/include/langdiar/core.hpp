#pragma once

#include "langdiar/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace langdiar {

// Reserved channel-role label for voice activity. Channel 0 of every
// LabelMatrix carries this role; it is never a language code.
inline constexpr const char* kVadLabel = "VAD";

struct WaveformBuffer {
  std::vector<double> samples;  // nominal range [-1, 1]
  int sample_rate = 16000;
  std::string source_id;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  void validate() const;
};

struct LanguageEntry {
  std::string code;
  bool embedded = false;  // embedded vs. matrix role, drives loss weighting
};

struct LanguageInventory {
  std::vector<LanguageEntry> languages;

  void validate() const;
  bool contains(const std::string& code) const { return index_of(code) >= 0; }
  int index_of(const std::string& code) const;
  bool is_embedded(const std::string& code) const;
  size_t size() const { return languages.size(); }

  static LanguageInventory from_codes(const std::vector<std::string>& codes,
                                      const std::vector<std::string>& embedded = {});
};

struct LabelMatrix {
  Mat values;                              // K×T in [0,1]; row 0 is VAD
  double frame_period = 0.025;             // seconds
  std::vector<std::string> channel_roles;  // roles[0] == kVadLabel

  long channels() const { return values.rows(); }
  long frames() const { return values.cols(); }
  void validate(bool binary = false) const;
};

struct Segment {
  double start = 0.0;  // seconds
  double end = 0.0;
  std::string label;   // language code or kVadLabel
};

struct SegmentAnnotation {
  std::vector<Segment> segments;
  std::string recording_id;

  double max_end() const;
  // Sorts by (label, start) and unions overlapping/touching same-label spans.
  void normalize();
  std::vector<std::string> labels_present() const;  // distinct non-VAD labels, first-seen order
};

struct DERBreakdown {
  double false_alarm = 0.0;
  double miss = 0.0;
  double confusion = 0.0;
  double der = 0.0;
  long scored_frames = 0;  // denominator: reference speech frames on the grid
};

// Rasterization: a frame is active for a label iff the frame center
// (t + 0.5) * frame_period lies inside [start, end) of a segment with that
// label. The VAD row is the union of all language rows and explicit VAD
// segments.
LabelMatrix segments_to_label_matrix(const SegmentAnnotation& ann,
                                     const LanguageInventory& inventory,
                                     double frame_period, double total_duration);

// Maximal runs of frames with value >= threshold become segments; runs
// shorter than min_duration are dropped.
SegmentAnnotation label_matrix_to_segments(const LabelMatrix& m, double threshold,
                                           double min_duration);

}  // namespace langdiar
