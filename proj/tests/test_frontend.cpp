// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <doctest.h>
#include <fstream>

#include "asd/errors.hpp"
#include "asd/frontend.hpp"
#include "asd/io.hpp"
#include "asd/rng.hpp"
#include "mfcc_oracle.hpp"
#include "test_support.hpp"

using namespace asd;
using namespace asd::frontend;

TEST_CASE("compute_mfcc: all-zero input gives identical floor frames") {
  std::vector<float> samples(16000, 0.0f);
  const MfccSequence seq = compute_mfcc(samples);
  const int t = seq.frames.dim(0);
  CHECK(t == (16000 - 400) / 160 + 1);
  for (int f = 1; f < t; ++f) {
    for (int j = 0; j < 13; ++j) {
      CHECK(seq.frames.at2(f, j) == seq.frames.at2(0, j));
    }
  }
  // coefficients equal the DCT of the constant log-floor vector
  const double logf = std::log(1e-10);
  for (int j = 0; j < 13; ++j) {
    double c = 0.0;
    for (int m = 0; m < 40; ++m) {
      c += logf * std::cos(M_PI * j * (2 * m + 1) / 80.0);
    }
    c *= j == 0 ? std::sqrt(1.0 / 40) : std::sqrt(2.0 / 40);
    CHECK(std::abs(seq.frames.at2(0, j) - c) < 1e-5);
  }
}

TEST_CASE("compute_mfcc: hop-shift consistency") {
  Xorshift64Star rng(3);
  std::vector<float> samples(16000);
  for (float& v : samples) v = rng.uniform(-1.0f, 1.0f);
  const MfccSequence full = compute_mfcc(samples);
  const MfccSequence shifted = compute_mfcc(
      std::span(samples.data() + 160, samples.size() - 160));
  // frame 0 of the shifted stream overlaps the pre-emphasis boundary sample
  // (its predecessor was cut off), so the identity starts at frame 1
  for (int f = 1; f < shifted.frames.dim(0); ++f) {
    for (int j = 0; j < 13; ++j) {
      CHECK(shifted.frames.at2(f, j) ==
            doctest::Approx(full.frames.at2(f + 1, j)).epsilon(1e-6));
    }
  }
}

TEST_CASE("compute_mfcc: matches the direct-DFT reference") {
  Xorshift64Star rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<float> samples(3200);  // 0.2 s
    for (float& v : samples) v = rng.uniform(-1.0f, 1.0f);
    const MfccSequence seq = compute_mfcc(samples);
    const auto ref = test::mfcc_reference(samples);
    REQUIRE(seq.frames.dim(0) == static_cast<int>(ref.size()));
    for (int f = 0; f < seq.frames.dim(0); ++f) {
      for (int j = 0; j < 13; ++j) {
        // reference quantized to the same float32 output precision
        CHECK(std::abs(seq.frames.at2(f, j) -
                       static_cast<float>(ref[f][j])) < 1e-6);
      }
    }
  }
}

TEST_CASE("compute_mfcc: single sine matches the reference") {
  std::vector<float> samples(16000);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = std::sin(2.0 * M_PI * 1000.0 * i / 16000.0);
  }
  const MfccSequence seq = compute_mfcc(samples);
  const auto ref = test::mfcc_reference(samples);
  for (int f = 0; f < seq.frames.dim(0); f += 7) {
    for (int j = 0; j < 13; ++j) {
      CHECK(std::abs(seq.frames.at2(f, j) -
                     static_cast<float>(ref[f][j])) < 1e-6);
    }
  }
}

TEST_CASE("compute_mfcc: input validation") {
  CHECK_THROWS_AS(compute_mfcc(std::vector<float>(100, 0.1f)), DataError);
  MfccConfig bad;
  bad.sample_rate = 8000;
  CHECK_THROWS_AS(compute_mfcc(std::vector<float>(16000, 0.1f), bad),
                  DataError);
}

TEST_CASE("fft: Parseval identity on random frames") {
  Xorshift64Star rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::complex<double>> buf(512);
    double time_energy = 0.0;
    for (auto& c : buf) {
      c = {static_cast<double>(rng.uniform(-1.0f, 1.0f)), 0.0};
      time_energy += std::norm(c);
    }
    fft_radix2(buf);
    double freq_energy = 0.0;
    for (const auto& c : buf) freq_energy += std::norm(c);
    freq_energy /= 512.0;
    CHECK(std::abs(freq_energy - time_energy) / time_energy < 1e-4);
  }
}

TEST_CASE("preprocess_faces: constant image closed form") {
  U8Image img;
  img.h = img.w = 8;
  img.pixels.assign(64, 128);
  const FaceFrameSequence seq = preprocess_faces(std::vector{img}, 8, 8);
  const float expected = (128.0f / 255.0f - 0.45f) / 0.225f;
  CHECK(seq.frames.shape == std::vector<int>{1, 1, 8, 8});
  for (float v : seq.frames.data) {
    CHECK(v == doctest::Approx(expected).epsilon(1e-4));
    CHECK(std::abs(v - 0.2309f) < 1e-3);
  }
}

TEST_CASE("preprocess_faces: target size passthrough keeps the pixel grid") {
  Xorshift64Star rng(31);
  U8Image img;
  img.h = img.w = 6;
  img.pixels.resize(36);
  for (auto& p : img.pixels) p = rng.byte();
  const FaceFrameSequence seq = preprocess_faces(std::vector{img}, 6, 6);
  for (int i = 0; i < 36; ++i) {
    const float expected = (img.pixels[i] / 255.0f - 0.45f) / 0.225f;
    CHECK(seq.frames.data[i] == doctest::Approx(expected).epsilon(1e-5));
  }
}

TEST_CASE("resize_bilinear: 2x2 checkerboard to 4x4, hand-computed") {
  // half-pixel centers, edge clamp; source positions {-0.25,0.25,0.75,1.25}
  // clamp+interp weights per axis: [1,0], [0.75,0.25], [0.25,0.75], [0,1]
  const float in[4] = {1, 0, 0, 1};
  const auto out = resize_bilinear(in, 2, 2, 4, 4);
  const double wx[4][2] = {{1, 0}, {0.75, 0.25}, {0.25, 0.75}, {0, 1}};
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      const double expected =
          wx[y][0] * (wx[x][0] * 1 + wx[x][1] * 0) +
          wx[y][1] * (wx[x][0] * 0 + wx[x][1] * 1);
      CHECK(out[static_cast<std::size_t>(y) * 4 + x] ==
            doctest::Approx(expected).epsilon(1e-6));
    }
  }
  // spot value worked out by hand: out[1][1] = 0.75*0.75 + 0.25*0.25
  CHECK(out[5] == doctest::Approx(0.625).epsilon(1e-6));
}

TEST_CASE("preprocess_faces: output range bound") {
  Xorshift64Star rng(37);
  std::vector<U8Image> imgs(3);
  for (auto& img : imgs) {
    img.h = 20;
    img.w = 14;
    img.pixels.resize(280);
    for (auto& p : img.pixels) p = rng.byte();
  }
  const FaceFrameSequence seq = preprocess_faces(imgs, 12, 12);
  const float lo = (0.0f - 0.45f) / 0.225f;
  const float hi = (1.0f - 0.45f) / 0.225f;
  for (float v : seq.frames.data) {
    CHECK(v >= lo - 1e-5f);
    CHECK(v <= hi + 1e-5f);
  }
  CHECK_THROWS_AS(preprocess_faces(std::vector<U8Image>{}, 8, 8), DataError);
  U8Image empty;
  CHECK_THROWS_AS(preprocess_faces(std::vector{empty}, 8, 8), DataError);
}

namespace {

MfccSequence fake_mfcc(int t) {
  MfccSequence seq;
  seq.frames = Tensor({t, 13});
  return seq;
}

FaceFrameSequence fake_faces(int t) {
  FaceFrameSequence seq;
  seq.frames = Tensor({t, 1, 4, 4});
  return seq;
}

}  // namespace

TEST_CASE("align_streams: ratio-4 truncation rules") {
  {
    const AlignedStreams a = align_streams(fake_mfcc(40), fake_faces(10));
    CHECK(a.ratio == 4);
    CHECK(a.audio.frames.dim(0) == 40);
    CHECK(a.video.frames.dim(0) == 10);
  }
  {
    const AlignedStreams a = align_streams(fake_mfcc(43), fake_faces(10));
    CHECK(a.audio.frames.dim(0) == 40);
    CHECK(a.video.frames.dim(0) == 10);
  }
  CHECK_THROWS_AS(align_streams(fake_mfcc(48), fake_faces(10)), DataError);
  CHECK_THROWS_AS(align_streams(fake_mfcc(0), fake_faces(10)), DataError);
}

TEST_CASE("wav: round trip and format rejection") {
  const std::string path = "/tmp/asd_test_wave.wav";
  Xorshift64Star rng(41);
  std::vector<float> samples(1600);
  for (float& v : samples) v = rng.uniform(-0.9f, 0.9f);
  io::write_wav(path, samples, 16000);
  const io::WavData wav = io::read_wav(path);
  CHECK(wav.sample_rate == 16000);
  REQUIRE(wav.samples.size() == samples.size());
  // written at 32767 scale, read back at 1/32768: up to ~1.5 quantization
  // steps of error
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(std::abs(wav.samples[i] - samples[i]) < 1.6f / 32768.0f);
  }

  // stereo header must be rejected
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  const unsigned char stereo_hdr[] = {
      'R', 'I', 'F', 'F', 40, 0, 0, 0, 'W', 'A', 'V', 'E', 'f', 'm',
      't', ' ', 16,  0,   0,  0, 1, 0, 2,   0,   0x80, 0x3e, 0, 0,
      0,   0,   0,   0,   4,  0, 16, 0, 'd', 'a', 't', 'a', 0, 0, 0, 0};
  out.write(reinterpret_cast<const char*>(stereo_hdr), sizeof(stereo_hdr));
  out.close();
  CHECK_THROWS_AS(io::read_wav(path), DataError);
  std::remove(path.c_str());
}

TEST_CASE("facestream: round trip and corrupt header") {
  const std::string path = "/tmp/asd_test_faces.facestream";
  Xorshift64Star rng(43);
  std::vector<U8Image> frames(5);
  for (auto& f : frames) {
    f.h = 6;
    f.w = 7;
    f.pixels.resize(42);
    for (auto& p : f.pixels) p = rng.byte();
  }
  io::write_facestream(path, frames);
  const auto back = io::read_facestream(path);
  REQUIRE(back.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back[i].h == 6);
    CHECK(back[i].w == 7);
    CHECK(back[i].pixels == frames[i].pixels);
  }

  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(0);
  f.write("XXXX", 4);
  f.close();
  CHECK_THROWS_AS(io::read_facestream(path), DataError);
  std::remove(path.c_str());
}
