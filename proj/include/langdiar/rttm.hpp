#pragma once

#include "langdiar/core.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace langdiar {

// RTTM SPEAKER lines; the speaker-name field carries the language code (or
// VAD). Times are onset + duration in seconds, written with 3 decimals.
// Same-label overlapping segments are unioned at read time.
std::vector<SegmentAnnotation> read_rttm(std::istream& in, const std::string& origin = "<stream>");
std::vector<SegmentAnnotation> read_rttm_file(const std::string& path);

void write_rttm(const std::vector<SegmentAnnotation>& anns, std::ostream& out);
void write_rttm_file(const std::vector<SegmentAnnotation>& anns, const std::string& path);

}  // namespace langdiar
