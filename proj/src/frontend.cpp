// SPDX-License-Identifier: Apache-2.0
#include "asd/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "asd/errors.hpp"
#include "asd/kernels.hpp"

namespace asd::frontend {

namespace {

constexpr double kPi = std::numbers::pi;

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

int MfccConfig::window_samples() const {
  return static_cast<int>(std::lround(sample_rate * window_ms / 1000.0));
}

int MfccConfig::hop_samples() const {
  return static_cast<int>(std::lround(sample_rate * hop_ms / 1000.0));
}

int MfccConfig::fft_size() const { return next_pow2(window_samples()); }

MfccConfig MfccConfig::from(const FrontendConfig& f) {
  MfccConfig cfg;
  cfg.sample_rate = f.sample_rate;
  cfg.window_ms = f.window_ms;
  cfg.hop_ms = f.hop_ms;
  cfg.n_mels = f.mel_bands;
  cfg.preemphasis = f.preemphasis;
  cfg.fmax = f.sample_rate / 2.0;
  return cfg;
}

void fft_radix2(std::vector<std::complex<double>>& buf) {
  const std::size_t n = buf.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw ShapeError("fft_radix2: length must be a power of two");
  }
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = buf[i + k];
        const std::complex<double> v = buf[i + k + len / 2] * w;
        buf[i + k] = u + v;
        buf[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

std::vector<std::vector<double>> mel_filterbank(int n_mels, int n_bins,
                                                double sample_rate, int n_fft,
                                                double fmin, double fmax) {
  // Triangles with unit peak: n_mels + 2 points evenly spaced on the mel
  // scale, filter m spanning [hz[m], hz[m+2]] with its apex at hz[m+1],
  // evaluated at the FFT bin center frequencies.
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> hz(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    const double m = mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1);
    hz[static_cast<std::size_t>(i)] = mel_to_hz(m);
  }
  std::vector<std::vector<double>> filters(
      static_cast<std::size_t>(n_mels),
      std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = hz[static_cast<std::size_t>(m)];
    const double mid = hz[static_cast<std::size_t>(m) + 1];
    const double hi = hz[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      filters[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)] =
          std::max(0.0, std::min(up, down));
    }
  }
  return filters;
}

MfccSequence compute_mfcc(std::span<const float> samples,
                          const MfccConfig& cfg) {
  if (cfg.sample_rate != 16000) {
    throw DataError("compute_mfcc: sample rate must be 16 kHz, got " +
                    std::to_string(cfg.sample_rate));
  }
  const int win = cfg.window_samples();
  const int hop = cfg.hop_samples();
  const int n_fft = cfg.fft_size();
  const int n_bins = n_fft / 2 + 1;
  if (static_cast<int>(samples.size()) < win) {
    throw DataError("compute_mfcc: need at least one full analysis window (" +
                    std::to_string(win) + " samples), got " +
                    std::to_string(samples.size()));
  }

  // Whole pipeline in double; frames stored as float32.
  std::vector<double> emph(samples.size());
  emph[0] = samples[0];
  for (std::size_t i = 1; i < samples.size(); ++i) {
    emph[i] = static_cast<double>(samples[i]) -
              cfg.preemphasis * static_cast<double>(samples[i - 1]);
  }

  std::vector<double> window(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i) {
    window[static_cast<std::size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * kPi * i / (win - 1));
  }

  const auto filters = mel_filterbank(cfg.n_mels, n_bins, cfg.sample_rate,
                                      n_fft, cfg.fmin, cfg.fmax);

  const int t = (static_cast<int>(samples.size()) - win) / hop + 1;
  Tensor frames({t, cfg.n_coeffs});

  const double dct0 = std::sqrt(1.0 / cfg.n_mels);
  const double dct = std::sqrt(2.0 / cfg.n_mels);

  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n_fft));
  std::vector<double> power(static_cast<std::size_t>(n_bins));
  std::vector<double> log_mel(static_cast<std::size_t>(cfg.n_mels));
  for (int f = 0; f < t; ++f) {
    const double* seg = emph.data() + static_cast<std::size_t>(f) * hop;
    for (int i = 0; i < win; ++i) {
      buf[static_cast<std::size_t>(i)] = {
          seg[i] * window[static_cast<std::size_t>(i)], 0.0};
    }
    std::fill(buf.begin() + win, buf.end(), std::complex<double>(0.0, 0.0));
    fft_radix2(buf);
    for (int k = 0; k < n_bins; ++k) {
      power[static_cast<std::size_t>(k)] =
          std::norm(buf[static_cast<std::size_t>(k)]) / n_fft;
    }
    for (int m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      const auto& fl = filters[static_cast<std::size_t>(m)];
      for (int k = 0; k < n_bins; ++k) e += fl[static_cast<std::size_t>(k)] * power[static_cast<std::size_t>(k)];
      log_mel[static_cast<std::size_t>(m)] = std::log(std::max(e, cfg.log_floor));
    }
    for (int j = 0; j < cfg.n_coeffs; ++j) {
      double c = 0.0;
      for (int m = 0; m < cfg.n_mels; ++m) {
        c += log_mel[static_cast<std::size_t>(m)] *
             std::cos(kPi * j * (2 * m + 1) / (2.0 * cfg.n_mels));
      }
      frames.at2(f, j) = static_cast<float>(c * (j == 0 ? dct0 : dct));
    }
  }
  check_finite(frames, "compute_mfcc");
  MfccSequence seq;
  seq.frames = std::move(frames);
  seq.hop_seconds = cfg.hop_ms / 1000.0;
  seq.window_seconds = cfg.window_ms / 1000.0;
  return seq;
}

std::vector<float> resize_bilinear(const float* in, int h, int w, int out_h,
                                   int out_w) {
  // Half-pixel centers with edge clamping.
  std::vector<float> out(static_cast<std::size_t>(out_h) * out_w);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * in[y0 * w + x0] + wx * in[y0 * w + x1];
      const double bot = (1.0 - wx) * in[y1 * w + x0] + wx * in[y1 * w + x1];
      out[static_cast<std::size_t>(y) * out_w + x] =
          static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
  return out;
}

Tensor preprocess_face_frame(const U8Image& raw, int target_h, int target_w,
                             double mean, double stdev) {
  if (raw.h <= 0 || raw.w <= 0 ||
      raw.pixels.size() != static_cast<std::size_t>(raw.h) * raw.w) {
    throw DataError("preprocess_faces: zero-sized or inconsistent image");
  }
  std::vector<float> gray(raw.pixels.size());
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
    gray[i] = static_cast<float>(raw.pixels[i]) / 255.0f;
  }
  std::vector<float> resized;
  if (raw.h == target_h && raw.w == target_w) {
    resized = std::move(gray);
  } else {
    resized = resize_bilinear(gray.data(), raw.h, raw.w, target_h, target_w);
  }
  Tensor out({1, target_h, target_w});
  const float m = static_cast<float>(mean);
  const float inv = 1.0f / static_cast<float>(stdev);
  for (std::size_t i = 0; i < resized.size(); ++i) {
    out.data[i] = (resized[i] - m) * inv;
  }
  return out;
}

FaceFrameSequence preprocess_faces(std::span<const U8Image> raw, int target_h,
                                   int target_w, double fps, double mean,
                                   double stdev) {
  if (raw.empty()) throw DataError("preprocess_faces: zero frames");
  Tensor frames({static_cast<int>(raw.size()), 1, target_h, target_w});
  const std::size_t frame_elems =
      static_cast<std::size_t>(target_h) * target_w;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    Tensor f = preprocess_face_frame(raw[i], target_h, target_w, mean, stdev);
    std::copy(f.data.begin(), f.data.end(),
              frames.data.begin() + i * frame_elems);
  }
  check_finite(frames, "preprocess_faces");
  FaceFrameSequence seq;
  seq.frames = std::move(frames);
  seq.fps = fps;
  return seq;
}

std::size_t align_counts(std::size_t t_audio, std::size_t t_video, int ratio) {
  if (t_audio == 0 || t_video == 0) {
    throw DataError("align_streams: empty stream");
  }
  const std::size_t r = static_cast<std::size_t>(ratio);
  const std::size_t full_video = t_audio / r;
  const std::size_t aligned = std::min(t_video, full_video);
  const std::size_t drift = t_audio > t_video * r ? t_audio - t_video * r
                                                  : t_video * r - t_audio;
  if (drift > r) {
    throw DataError("align_streams: drift of " + std::to_string(drift) +
                    " MFCC frames exceeds one video frame (" +
                    std::to_string(r) + ")");
  }
  if (aligned == 0) {
    throw DataError("align_streams: no complete video frame after alignment");
  }
  return aligned;
}

AlignedStreams align_streams(MfccSequence audio, FaceFrameSequence video) {
  const double frame_period = 1.0 / video.fps;
  const double ratio_f = frame_period / audio.hop_seconds;
  const int ratio = static_cast<int>(std::lround(ratio_f));
  if (ratio < 1 || std::abs(ratio_f - ratio) > 1e-9) {
    throw DataError(
        "align_streams: video frame period must be an integer number of MFCC "
        "hops");
  }
  const std::size_t t_v =
      align_counts(static_cast<std::size_t>(audio.frames.dim(0)),
                   static_cast<std::size_t>(video.frames.dim(0)), ratio);
  const std::size_t t_a = t_v * static_cast<std::size_t>(ratio);

  if (static_cast<std::size_t>(audio.frames.dim(0)) != t_a) {
    Tensor trimmed({static_cast<int>(t_a), audio.frames.dim(1)});
    std::copy(audio.frames.data.begin(),
              audio.frames.data.begin() + trimmed.numel(),
              trimmed.data.begin());
    audio.frames = std::move(trimmed);
  }
  if (static_cast<std::size_t>(video.frames.dim(0)) != t_v) {
    Tensor trimmed({static_cast<int>(t_v), video.frames.dim(1),
                    video.frames.dim(2), video.frames.dim(3)});
    std::copy(video.frames.data.begin(),
              video.frames.data.begin() + trimmed.numel(),
              trimmed.data.begin());
    video.frames = std::move(trimmed);
  }
  return {std::move(audio), std::move(video), ratio};
}

}  // namespace asd::frontend
