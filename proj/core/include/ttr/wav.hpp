// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>

#include "ttr/signal.hpp"

namespace ttr {

/// Reads a RIFF/WAVE file. Accepts only format tag 1 (integer PCM), 16-bit,
/// mono; anything else is rejected with a descriptive IoError.
/// Sample conversion: amplitude = pcm / 32768.
Waveform read_wav(const std::string& path);

/// Writes 16-bit little-endian mono PCM.
/// Sample conversion: pcm = clamp(round(amplitude * 32767), -32768, 32767).
void write_wav(const std::string& path, const Waveform& w);

}  // namespace ttr
