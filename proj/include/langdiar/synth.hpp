#pragma once

#include "langdiar/core.hpp"

#include <string>
#include <vector>

namespace langdiar {

// Procedural audio used by the demo pipeline and the test suites: formant-style
// "speech" whose spectral character is determined by the language code, plus
// noise and impulse-response generators for augmentation pools. Everything is
// deterministic in (arguments, seed).

// Voiced phone sequence. Speakers differ in pitch; languages differ in their
// formant inventory, so a frame-level classifier can separate them.
WaveformBuffer synth_speech(const std::string& language, int speaker, double seconds,
                            uint64_t seed, int sample_rate = 16000);

// kinds: "white", "hum", "babble"
WaveformBuffer synth_noise(const std::string& kind, double seconds, uint64_t seed,
                           int sample_rate = 16000);

// direct impulse plus an exponentially decaying diffuse tail
WaveformBuffer synth_rir(double decay_seconds, uint64_t seed, int sample_rate = 16000);

// Writes n_utterances WAVs plus manifest.jsonl under dir; returns the manifest
// path.
std::string build_toy_pool(const std::string& dir, const std::string& language,
                           int n_utterances, int n_speakers, double min_seconds,
                           double max_seconds, uint64_t seed);

}  // namespace langdiar
