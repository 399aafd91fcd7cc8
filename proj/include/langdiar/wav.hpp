#pragma once

#include "langdiar/core.hpp"

#include <string>

namespace langdiar {

// 16-bit PCM mono WAV. Reading rejects anything else; writing clips to
// [-1, 1] before quantization.
WaveformBuffer read_wav(const std::string& path);
void write_wav(const WaveformBuffer& wav, const std::string& path);

}  // namespace langdiar
