#include "langdiar/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace langdiar {

void WaveformBuffer::validate() const {
  if (sample_rate <= 0) fail("WaveformBuffer: sample_rate must be positive");
  if (samples.empty()) fail("WaveformBuffer: no samples");
  for (double s : samples)
    if (!std::isfinite(s)) fail("WaveformBuffer: non-finite sample");
}

void LanguageInventory::validate() const {
  if (languages.empty()) fail("LanguageInventory: at least one language required");
  std::set<std::string> seen;
  for (const auto& l : languages) {
    if (l.code.empty()) fail("LanguageInventory: empty language code");
    if (l.code == kVadLabel) fail("LanguageInventory: language code collides with VAD role");
    if (!seen.insert(l.code).second)
      fail(strfmt("LanguageInventory: duplicate language code '%s'", l.code.c_str()));
  }
}

int LanguageInventory::index_of(const std::string& code) const {
  for (size_t i = 0; i < languages.size(); ++i)
    if (languages[i].code == code) return static_cast<int>(i);
  return -1;
}

bool LanguageInventory::is_embedded(const std::string& code) const {
  int i = index_of(code);
  if (i < 0) fail(strfmt("LanguageInventory: unknown language '%s'", code.c_str()));
  return languages[static_cast<size_t>(i)].embedded;
}

LanguageInventory LanguageInventory::from_codes(const std::vector<std::string>& codes,
                                                const std::vector<std::string>& embedded) {
  LanguageInventory inv;
  for (const auto& c : codes) {
    bool emb = std::find(embedded.begin(), embedded.end(), c) != embedded.end();
    inv.languages.push_back({c, emb});
  }
  inv.validate();
  return inv;
}

void LabelMatrix::validate(bool binary) const {
  if (channel_roles.size() != static_cast<size_t>(values.rows()))
    fail("LabelMatrix: channel_roles/values row mismatch");
  if (channel_roles.empty() || channel_roles[0] != kVadLabel)
    fail("LabelMatrix: channel 0 must be VAD");
  if (frame_period <= 0) fail("LabelMatrix: frame_period must be positive");
  for (long k = 0; k < values.rows(); ++k)
    for (long t = 0; t < values.cols(); ++t) {
      double v = values(k, t);
      if (!(v >= 0.0 && v <= 1.0)) fail("LabelMatrix: value outside [0,1]");
      if (binary && v != 0.0 && v != 1.0) fail("LabelMatrix: non-binary ground truth");
    }
}

double SegmentAnnotation::max_end() const {
  double m = 0.0;
  for (const auto& s : segments) m = std::max(m, s.end);
  return m;
}

void SegmentAnnotation::normalize() {
  for (const auto& s : segments)
    if (!(s.end > s.start))
      fail(strfmt("SegmentAnnotation[%s]: segment end %.3f <= start %.3f",
                  recording_id.c_str(), s.end, s.start));
  std::stable_sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) {
    if (a.label != b.label) return a.label < b.label;
    return a.start < b.start;
  });
  std::vector<Segment> merged;
  for (const auto& s : segments) {
    if (!merged.empty() && merged.back().label == s.label && s.start <= merged.back().end) {
      merged.back().end = std::max(merged.back().end, s.end);
    } else {
      merged.push_back(s);
    }
  }
  segments = std::move(merged);
  std::stable_sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.label < b.label;
  });
}

std::vector<std::string> SegmentAnnotation::labels_present() const {
  std::vector<std::string> out;
  for (const auto& s : segments) {
    if (s.label == kVadLabel) continue;
    if (std::find(out.begin(), out.end(), s.label) == out.end()) out.push_back(s.label);
  }
  return out;
}

LabelMatrix segments_to_label_matrix(const SegmentAnnotation& ann,
                                     const LanguageInventory& inventory,
                                     double frame_period, double total_duration) {
  inventory.validate();
  if (frame_period <= 0) fail("segments_to_label_matrix: frame_period must be positive");
  if (total_duration <= 0) fail("segments_to_label_matrix: total_duration must be positive");
  for (const auto& s : ann.segments) {
    if (s.label != kVadLabel && !inventory.contains(s.label))
      fail(strfmt("segments_to_label_matrix: unknown label '%s'", s.label.c_str()));
    if (s.end > total_duration + 1e-9)
      fail(strfmt("segments_to_label_matrix: segment end %.3f beyond duration %.3f", s.end,
                  total_duration));
  }

  // 1e-9 guard keeps T exact when duration is an integer multiple of the period
  long t_frames = static_cast<long>(std::floor(total_duration / frame_period + 1e-9));
  long k = static_cast<long>(inventory.size()) + 1;
  LabelMatrix m;
  m.values = Mat::Zero(k, t_frames);
  m.frame_period = frame_period;
  m.channel_roles.push_back(kVadLabel);
  for (const auto& l : inventory.languages) m.channel_roles.push_back(l.code);

  for (const auto& s : ann.segments) {
    long ch = s.label == kVadLabel ? 0 : 1 + inventory.index_of(s.label);
    for (long t = 0; t < t_frames; ++t) {
      double center = (t + 0.5) * frame_period;
      if (center >= s.start && center < s.end) {
        m.values(ch, t) = 1.0;
        m.values(0, t) = 1.0;  // speech wherever a language is active
      }
    }
  }
  return m;
}

SegmentAnnotation label_matrix_to_segments(const LabelMatrix& m, double threshold,
                                           double min_duration) {
  if (!(threshold > 0.0 && threshold < 1.0))
    fail("label_matrix_to_segments: threshold must be in (0,1)");
  if (min_duration < 0) fail("label_matrix_to_segments: min_duration must be >= 0");
  m.validate();

  SegmentAnnotation ann;
  for (long k = 0; k < m.channels(); ++k) {
    long run_start = -1;
    for (long t = 0; t <= m.frames(); ++t) {
      bool active = t < m.frames() && m.values(k, t) >= threshold;
      if (active && run_start < 0) run_start = t;
      if (!active && run_start >= 0) {
        double start = run_start * m.frame_period;
        double end = t * m.frame_period;
        if (end - start >= min_duration - 1e-12)
          ann.segments.push_back({start, end, m.channel_roles[static_cast<size_t>(k)]});
        run_start = -1;
      }
    }
  }
  std::stable_sort(ann.segments.begin(), ann.segments.end(),
                   [](const Segment& a, const Segment& b) {
                     if (a.start != b.start) return a.start < b.start;
                     return a.label < b.label;
                   });
  return ann;
}

}  // namespace langdiar
