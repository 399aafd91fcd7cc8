#pragma once

#include "langdiar/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace langdiar {

// One JSON-lines record per utterance. Monolingual pool entries carry a
// single language; simulated corpus entries reference an RTTM with the full
// span labels. Relative audio/rttm paths resolve against the manifest's
// directory.
struct ProvenanceRecord {
  std::string source_id;
  double source_start = 0.0;  // span within the source audio, seconds
  double source_end = 0.0;
  std::string language;
  std::string speaker;
  double out_start = 0.0;  // label span in the built utterance
  double out_end = 0.0;
};

struct ManifestEntry {
  std::string audio;                 // wav path
  std::string language;              // pool entries: the utterance language
  double duration = 0.0;             // seconds
  std::string speaker;               // speaker id
  std::string recording_id;          // defaults to audio stem
  std::string rttm;                  // labeled corpora: reference rttm path
  std::string family;                // optional language-family tag
  std::vector<std::string> languages;  // labeled corpora: codes present
  bool augmented = false;
  std::optional<double> snr_db;
  std::vector<ProvenanceRecord> provenance;

  std::string to_json() const;
  static ManifestEntry from_json(const std::string& line, const std::string& origin,
                                 long line_no);
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);

// Resolve a possibly-relative path against the manifest location.
std::string resolve_path(const std::string& manifest_path, const std::string& member);

}  // namespace langdiar
