#include "langdiar/rttm.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace langdiar {

std::vector<SegmentAnnotation> read_rttm(std::istream& in, const std::string& origin) {
  std::map<std::string, SegmentAnnotation> by_rec;
  std::vector<std::string> order;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string type, rec, chan, onset_s, dur_s, f6, f7, name;
    if (!(ls >> type >> rec >> chan >> onset_s >> dur_s >> f6 >> f7 >> name))
      fail(strfmt("%s:%ld: malformed RTTM line", origin.c_str(), line_no));
    if (type != "SPEAKER") continue;  // other record types are ignored
    double onset, dur;
    try {
      onset = std::stod(onset_s);
      dur = std::stod(dur_s);
    } catch (const std::exception&) {
      fail(strfmt("%s:%ld: malformed RTTM times", origin.c_str(), line_no));
    }
    if (dur <= 0) fail(strfmt("%s:%ld: non-positive duration %.6f", origin.c_str(), line_no, dur));
    if (onset < 0) fail(strfmt("%s:%ld: negative onset %.6f", origin.c_str(), line_no, onset));
    if (by_rec.find(rec) == by_rec.end()) {
      by_rec[rec].recording_id = rec;
      order.push_back(rec);
    }
    by_rec[rec].segments.push_back({onset, onset + dur, name});
  }
  std::vector<SegmentAnnotation> out;
  for (const auto& rec : order) {
    SegmentAnnotation ann = by_rec[rec];
    ann.normalize();
    out.push_back(std::move(ann));
  }
  return out;
}

std::vector<SegmentAnnotation> read_rttm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(strfmt("read_rttm: cannot open '%s'", path.c_str()));
  return read_rttm(in, path);
}

void write_rttm(const std::vector<SegmentAnnotation>& anns, std::ostream& out) {
  for (const auto& ann : anns) {
    for (const auto& s : ann.segments) {
      if (!(s.end > s.start))
        fail(strfmt("write_rttm[%s]: non-positive segment duration", ann.recording_id.c_str()));
      out << strfmt("SPEAKER %s 1 %.3f %.3f <NA> <NA> %s <NA> <NA>\n",
                    ann.recording_id.c_str(), s.start, s.end - s.start, s.label.c_str());
    }
  }
}

void write_rttm_file(const std::vector<SegmentAnnotation>& anns, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(strfmt("write_rttm: cannot open '%s'", path.c_str()));
  write_rttm(anns, out);
}

}  // namespace langdiar
