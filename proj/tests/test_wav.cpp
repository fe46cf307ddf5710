// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "ttr/errors.hpp"
#include "ttr/rng.hpp"

using namespace ttr;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ttrss_wav_test";
  fs::create_directories(dir);
  return (dir / name).string();
}

// Minimal header writer for malformed-file cases.
void write_header(const std::string& path, std::uint16_t format, std::uint16_t channels,
                  std::uint16_t bits) {
  std::ofstream os(path, std::ios::binary);
  const auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
  const auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  os.write("RIFF", 4);
  u32(36 + 4);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  u32(16);
  u16(format);
  u16(channels);
  u32(8000);
  u32(8000u * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  os.write("data", 4);
  u32(4);
  u32(0);
}

}  // namespace

TEST_CASE("wav round trip follows the conversion formulas exactly") {
  Rng rng(31);
  Waveform w;
  w.sample_rate = 8000.0;
  w.samples = {0.0, 1.0, -1.0, 0.5, -0.25, 1.5, -1.5};  // includes clamping cases
  for (int i = 0; i < 200; ++i) w.samples.push_back(rng.uniform(-1.0, 1.0));

  const std::string path = temp_path("roundtrip.wav");
  write_wav(path, w);
  const Waveform r = read_wav(path);

  REQUIRE(r.samples.size() == w.samples.size());
  CHECK(r.sample_rate == 8000.0);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const long pcm = std::clamp(std::lround(w.samples[i] * 32767.0), -32768L, 32767L);
    CHECK(r.samples[i] == static_cast<double>(pcm) / 32768.0);
  }
}

TEST_CASE("wav reader skips unknown chunks") {
  // LIST chunk ahead of fmt/data.
  const std::string path = temp_path("chunky.wav");
  {
    std::ofstream os(path, std::ios::binary);
    const auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
    const auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    os.write("RIFF", 4);
    u32(4 + 8 + 6 + 8 + 16 + 8 + 4);
    os.write("WAVE", 4);
    os.write("LIST", 4);
    u32(6);
    os.write("junk!!", 6);
    os.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(1);
    u32(8000);
    u32(16000);
    u16(2);
    u16(16);
    os.write("data", 4);
    u32(4);
    u16(static_cast<std::uint16_t>(16384));
    u16(static_cast<std::uint16_t>(-16384));
  }
  const Waveform r = read_wav(path);
  REQUIRE(r.samples.size() == 2);
  CHECK(r.samples[0] == doctest::Approx(0.5));
  CHECK(r.samples[1] == doctest::Approx(-0.5));
}

TEST_CASE("wav reader rejects unsupported formats") {
  const std::string stereo = temp_path("stereo.wav");
  write_header(stereo, 1, 2, 16);
  CHECK_THROWS_WITH_AS(read_wav(stereo), doctest::Contains("channel"), IoError);

  const std::string floaty = temp_path("float.wav");
  write_header(floaty, 3, 1, 32);
  CHECK_THROWS_WITH_AS(read_wav(floaty), doctest::Contains("format tag"), IoError);

  const std::string deep = temp_path("deep.wav");
  write_header(deep, 1, 1, 24);
  CHECK_THROWS_WITH_AS(read_wav(deep), doctest::Contains("bit depth"), IoError);

  CHECK_THROWS_AS(read_wav(temp_path("missing.wav")), IoError);

  const std::string garbage = temp_path("garbage.wav");
  {
    std::ofstream os(garbage, std::ios::binary);
    os << "this is not a wav file at all";
  }
  CHECK_THROWS_AS(read_wav(garbage), IoError);
}

TEST_CASE("wav writer validates the waveform") {
  Waveform w;
  w.sample_rate = 0.0;
  w.samples = {0.0};
  CHECK_THROWS_AS(write_wav(temp_path("bad.wav"), w), std::invalid_argument);
}
