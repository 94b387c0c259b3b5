// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asd/frontend.hpp"

namespace asd::io {

struct WavData {
  int sample_rate = 0;
  std::vector<float> samples;  // mono, scaled by 1/32768
};

// PCM16 mono WAV only; anything else is a DataError.
WavData read_wav(const std::string& path);
void write_wav(const std::string& path, const std::vector<float>& samples,
               int sample_rate);

// .facestream: magic "FSTR", u32 version (1), u32 n_frames, u16 H, u16 W,
// then n_frames*H*W uint8 grayscale pixels, row-major. Little-endian.
std::vector<frontend::U8Image> read_facestream(const std::string& path);
void write_facestream(const std::string& path,
                      const std::vector<frontend::U8Image>& frames);

}  // namespace asd::io
