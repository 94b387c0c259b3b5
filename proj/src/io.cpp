// SPDX-License-Identifier: Apache-2.0
#include "asd/io.hpp"

#include <cstring>
#include <fstream>

#include "asd/errors.hpp"

namespace asd::io {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

std::uint16_t get_u16(const std::string& b, std::size_t pos) {
  return static_cast<std::uint8_t>(b[pos]) |
         (static_cast<std::uint16_t>(static_cast<std::uint8_t>(b[pos + 1]))
          << 8);
}

std::uint32_t get_u32(const std::string& b, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[pos + i]))
         << (8 * i);
  }
  return v;
}

void put_u16(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

WavData read_wav(const std::string& path) {
  const std::string b = read_file(path);
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 ||
      b.compare(8, 4, "WAVE") != 0) {
    throw DataError(path + ": not a RIFF/WAVE file");
  }
  WavData wav;
  bool got_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::string id = b.substr(pos, 4);
    const std::uint32_t len = get_u32(b, pos + 4);
    pos += 8;
    if (pos + len > b.size()) throw DataError(path + ": truncated chunk " + id);
    if (id == "fmt ") {
      if (len < 16) throw DataError(path + ": short fmt chunk");
      const std::uint16_t format = get_u16(b, pos);
      const std::uint16_t channels = get_u16(b, pos + 2);
      const std::uint32_t rate = get_u32(b, pos + 4);
      const std::uint16_t bits = get_u16(b, pos + 14);
      if (format != 1 || bits != 16)
        throw DataError(path + ": only PCM16 WAV is supported");
      if (channels != 1) throw DataError(path + ": only mono WAV is supported");
      wav.sample_rate = static_cast<int>(rate);
      got_fmt = true;
    } else if (id == "data") {
      if (!got_fmt) throw DataError(path + ": data chunk before fmt");
      const std::size_t n = len / 2;
      wav.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint16_t u = get_u16(b, pos + 2 * i);
        const std::int16_t s = static_cast<std::int16_t>(u);
        wav.samples[i] = static_cast<float>(s) / 32768.0f;
      }
      return wav;
    }
    pos += len + (len & 1);  // chunks are word-aligned
  }
  throw DataError(path + ": no data chunk");
}

void write_wav(const std::string& path, const std::vector<float>& samples,
               int sample_rate) {
  std::string b;
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  b.append("RIFF");
  put_u32(b, 36 + data_len);
  b.append("WAVE");
  b.append("fmt ");
  put_u32(b, 16);
  put_u16(b, 1);  // PCM
  put_u16(b, 1);  // mono
  put_u32(b, static_cast<std::uint32_t>(sample_rate));
  put_u32(b, static_cast<std::uint32_t>(sample_rate * 2));  // byte rate
  put_u16(b, 2);   // block align
  put_u16(b, 16);  // bits
  b.append("data");
  put_u32(b, data_len);
  for (float v : samples) {
    float c = v;
    if (c > 1.0f) c = 1.0f;
    if (c < -1.0f) c = -1.0f;
    const std::int16_t s = static_cast<std::int16_t>(std::lrintf(c * 32767.0f));
    put_u16(b, static_cast<std::uint16_t>(s));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!out) throw DataError("short write to " + path);
}

std::vector<frontend::U8Image> read_facestream(const std::string& path) {
  const std::string b = read_file(path);
  if (b.size() < 16 || b.compare(0, 4, "FSTR") != 0) {
    throw DataError(path + ": bad facestream magic");
  }
  const std::uint32_t version = get_u32(b, 4);
  if (version != 1)
    throw DataError(path + ": unsupported facestream version " +
                    std::to_string(version));
  const std::uint32_t n_frames = get_u32(b, 8);
  const int h = get_u16(b, 12);
  const int w = get_u16(b, 14);
  if (h == 0 || w == 0) throw DataError(path + ": zero-sized frames");
  const std::size_t frame_bytes = static_cast<std::size_t>(h) * w;
  if (b.size() != 16 + frame_bytes * n_frames) {
    throw DataError(path + ": size does not match header");
  }
  std::vector<frontend::U8Image> frames(n_frames);
  for (std::uint32_t i = 0; i < n_frames; ++i) {
    frames[i].h = h;
    frames[i].w = w;
    frames[i].pixels.resize(frame_bytes);
    std::memcpy(frames[i].pixels.data(), b.data() + 16 + i * frame_bytes,
                frame_bytes);
  }
  return frames;
}

void write_facestream(const std::string& path,
                      const std::vector<frontend::U8Image>& frames) {
  if (frames.empty()) throw DataError("write_facestream: no frames");
  const int h = frames[0].h;
  const int w = frames[0].w;
  std::string b;
  b.append("FSTR");
  put_u32(b, 1);
  put_u32(b, static_cast<std::uint32_t>(frames.size()));
  put_u16(b, static_cast<std::uint16_t>(h));
  put_u16(b, static_cast<std::uint16_t>(w));
  for (const auto& f : frames) {
    if (f.h != h || f.w != w)
      throw DataError("write_facestream: inconsistent frame sizes");
    b.append(reinterpret_cast<const char*>(f.pixels.data()), f.pixels.size());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!out) throw DataError("short write to " + path);
}

}  // namespace asd::io
