// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "ttr/errors.hpp"

namespace ttr {
namespace {

constexpr std::uint16_t kFormatPcm = 1;

std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
void wr_u16(std::ofstream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}
void wr_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open WAV file: " + path);

  unsigned char riff[12];
  if (!is.read(reinterpret_cast<char*>(riff), 12))
    throw IoError("truncated RIFF header: " + path);
  if (std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(riff + 8, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  std::vector<unsigned char> data;

  unsigned char hdr[8];
  while (is.read(reinterpret_cast<char*>(hdr), 8)) {
    const std::uint32_t size = rd_u32(hdr + 4);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw IoError("fmt chunk too small: " + path);
      std::vector<unsigned char> fmt(size);
      if (!is.read(reinterpret_cast<char*>(fmt.data()), size))
        throw IoError("truncated fmt chunk: " + path);
      format = rd_u16(fmt.data() + 0);
      channels = rd_u16(fmt.data() + 2);
      sample_rate = rd_u32(fmt.data() + 4);
      bits = rd_u16(fmt.data() + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data.resize(size);
      if (!is.read(reinterpret_cast<char*>(data.data()), size))
        throw IoError("truncated data chunk: " + path);
    } else {
      is.seekg(size + (size % 2), std::ios::cur);  // RIFF chunks are 2-byte aligned
      continue;
    }
    if (size % 2) is.seekg(1, std::ios::cur);
  }

  if (!have_fmt) throw IoError("missing fmt chunk: " + path);
  if (format != kFormatPcm)
    throw IoError("unsupported format tag " + std::to_string(format) +
                  " (only integer PCM): " + path);
  if (channels != 1)
    throw IoError("unsupported channel count " + std::to_string(channels) +
                  " (only mono): " + path);
  if (bits != 16)
    throw IoError("unsupported bit depth " + std::to_string(bits) + " (only 16-bit): " + path);
  if (sample_rate == 0) throw IoError("zero sample rate: " + path);

  Waveform w;
  w.sample_rate = static_cast<double>(sample_rate);
  const std::size_t n = data.size() / 2;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int16_t s = static_cast<std::int16_t>(rd_u16(data.data() + 2 * i));
    w.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  validate(w, "write_wav");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot create WAV file: " + path);

  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);

  os.write("RIFF", 4);
  wr_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wr_u32(os, 16);
  wr_u16(os, kFormatPcm);
  wr_u16(os, 1);  // mono
  wr_u32(os, rate);
  wr_u32(os, rate * 2);  // byte rate
  wr_u16(os, 2);         // block align
  wr_u16(os, 16);        // bits
  os.write("data", 4);
  wr_u32(os, data_bytes);

  for (double a : w.samples) {
    long v = std::lround(a * 32767.0);
    v = std::clamp(v, -32768L, 32767L);
    wr_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace ttr
