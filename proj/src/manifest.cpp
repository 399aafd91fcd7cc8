#include "langdiar/manifest.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>

namespace langdiar {

using nlohmann::json;

std::string ManifestEntry::to_json() const {
  json j;
  j["audio"] = audio;
  if (!language.empty()) j["language"] = language;
  j["duration"] = duration;
  if (!speaker.empty()) j["speaker"] = speaker;
  if (!recording_id.empty()) j["recording_id"] = recording_id;
  if (!rttm.empty()) j["rttm"] = rttm;
  if (!family.empty()) j["family"] = family;
  if (!languages.empty()) j["languages"] = languages;
  if (augmented) j["augmented"] = true;
  if (snr_db) j["snr_db"] = *snr_db;
  if (!provenance.empty()) {
    json spans = json::array();
    for (const auto& p : provenance)
      spans.push_back({{"source", p.source_id},
                       {"source_start", p.source_start},
                       {"source_end", p.source_end},
                       {"language", p.language},
                       {"speaker", p.speaker},
                       {"out_start", p.out_start},
                       {"out_end", p.out_end}});
    j["provenance"] = spans;
  }
  return j.dump();
}

ManifestEntry ManifestEntry::from_json(const std::string& line, const std::string& origin,
                                       long line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const std::exception& e) {
    fail(strfmt("%s:%ld: bad manifest JSON: %s", origin.c_str(), line_no, e.what()));
  }
  ManifestEntry e;
  try {
    e.audio = j.at("audio").get<std::string>();
    e.duration = j.value("duration", 0.0);
    e.language = j.value("language", std::string());
    e.speaker = j.value("speaker", std::string());
    e.recording_id = j.value("recording_id", std::string());
    e.rttm = j.value("rttm", std::string());
    e.family = j.value("family", std::string());
    if (j.contains("languages")) e.languages = j["languages"].get<std::vector<std::string>>();
    e.augmented = j.value("augmented", false);
    if (j.contains("snr_db") && !j["snr_db"].is_null()) e.snr_db = j["snr_db"].get<double>();
    if (j.contains("provenance")) {
      for (const auto& s : j["provenance"]) {
        ProvenanceRecord p;
        p.source_id = s.value("source", std::string());
        p.source_start = s.value("source_start", 0.0);
        p.source_end = s.value("source_end", 0.0);
        p.language = s.value("language", std::string());
        p.speaker = s.value("speaker", std::string());
        p.out_start = s.value("out_start", 0.0);
        p.out_end = s.value("out_end", 0.0);
        e.provenance.push_back(std::move(p));
      }
    }
  } catch (const std::exception& ex) {
    fail(strfmt("%s:%ld: manifest entry missing field: %s", origin.c_str(), line_no, ex.what()));
  }
  if (e.recording_id.empty())
    e.recording_id = std::filesystem::path(e.audio).stem().string();
  return e;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(strfmt("read_manifest: cannot open '%s'", path.c_str()));
  std::vector<ManifestEntry> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    out.push_back(ManifestEntry::from_json(line, path, line_no));
  }
  return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(strfmt("write_manifest: cannot open '%s'", path.c_str()));
  for (const auto& e : entries) out << e.to_json() << "\n";
}

std::string resolve_path(const std::string& manifest_path, const std::string& member) {
  std::filesystem::path p(member);
  if (p.is_absolute()) return member;
  return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

}  // namespace langdiar
