// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "asd/model_io.hpp"
#include "asd/tensor.hpp"

namespace asd::frontend {

struct MfccConfig {
  int sample_rate = 16000;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 40;
  int n_coeffs = 13;
  double preemphasis = 0.97;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;

  int window_samples() const;
  int hop_samples() const;
  int fft_size() const;  // next power of two >= window_samples

  static MfccConfig from(const FrontendConfig& f);
};

struct MfccSequence {
  Tensor frames;  // [T_a x n_coeffs]
  double hop_seconds = 0.010;
  double window_seconds = 0.025;
};

struct FaceFrameSequence {
  Tensor frames;  // [T_v x 1 x H x W]
  double fps = 25.0;
};

struct U8Image {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> pixels;  // row-major grayscale
};

// samples: mono PCM at cfg.sample_rate, already scaled to [-1, 1].
// Pipeline: pre-emphasis -> Hamming window / hop framing -> power spectrum
// (|FFT|^2 / n_fft) -> triangular mel filterbank (unit peak, 2595*log10 mel
// scale) -> log with floor -> orthonormal DCT-II, first n_coeffs kept.
// Internally double precision; frames stored as float32.
MfccSequence compute_mfcc(std::span<const float> samples,
                          const MfccConfig& cfg = {});

// Bilinear resize (half-pixel centers, edge clamp) to target size, scale to
// [0,1], then standardize by the fixed (mean, std).
FaceFrameSequence preprocess_faces(std::span<const U8Image> raw, int target_h,
                                   int target_w, double fps = 25.0,
                                   double mean = 0.45, double stdev = 0.225);

// Single-frame variant used by the streaming CLI path.
Tensor preprocess_face_frame(const U8Image& raw, int target_h, int target_w,
                             double mean = 0.45, double stdev = 0.225);

struct AlignedStreams {
  MfccSequence audio;
  FaceFrameSequence video;
  int ratio = 4;  // MFCC frames per video frame
};

// Truncates the longer stream so T_a == ratio * T_v. Errors if the drift
// exceeds one video frame (ratio MFCC frames) or a stream is empty.
AlignedStreams align_streams(MfccSequence audio, FaceFrameSequence video);

// Count-level alignment shared with the streaming CLI: returns the aligned
// video-frame count for (t_audio, t_video).
std::size_t align_counts(std::size_t t_audio, std::size_t t_video, int ratio);

// Internals exposed for verification.
void fft_radix2(std::vector<std::complex<double>>& buf);  // in-place, n = 2^k
std::vector<std::vector<double>> mel_filterbank(int n_mels, int n_bins,
                                                double sample_rate, int n_fft,
                                                double fmin, double fmax);
std::vector<float> resize_bilinear(const float* in, int h, int w, int out_h,
                                   int out_w);

}  // namespace asd::frontend
