// Copyright 2026 The coattn-ser Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "coattn/audio.hpp"
#include "coattn/rng.hpp"
#include "doctest.h"

using namespace coattn;
using audio::AudioError;

namespace {

// Hand-assembled RIFF/WAVE container.
std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t channels,
                                    std::uint32_t rate, std::uint16_t bits,
                                    const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> out;
  auto put = [&out](std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto tag = [&out](const char* s) { out.insert(out.end(), s, s + 4); };
  tag("RIFF");
  put(36 + data.size(), 4);
  tag("WAVE");
  tag("fmt ");
  put(16, 4);
  put(format, 2);
  put(channels, 2);
  put(rate, 4);
  put(rate * channels * bits / 8, 4);
  put(channels * bits / 8, 2);
  put(bits, 2);
  tag("data");
  put(data.size(), 4);
  out.insert(out.end(), data.begin(), data.end());
  return out;
}

std::vector<std::uint8_t> pcm16(const std::vector<std::int16_t>& s) {
  std::vector<std::uint8_t> out;
  for (std::int16_t v : s) {
    const auto u = static_cast<std::uint16_t>(v);
    out.push_back(static_cast<std::uint8_t>(u & 0xFF));
    out.push_back(static_cast<std::uint8_t>(u >> 8));
  }
  return out;
}

std::vector<std::uint8_t> f32(const std::vector<float>& s) {
  std::vector<std::uint8_t> out(s.size() * 4);
  std::memcpy(out.data(), s.data(), out.size());
  return out;
}

audio::Waveform sine(double freq, int rate, std::size_t n, double amp = 0.5) {
  audio::Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq *
                                                     static_cast<double>(i) / rate));
  }
  return w;
}

// Index of the largest naive-DFT magnitude among bins 1..n/2.
std::size_t dft_peak(const std::vector<float>& x) {
  const std::size_t n = x.size();
  std::size_t best = 0;
  double best_mag = -1.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += static_cast<double>(x[i]) *
             std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) / n);
    }
    if (std::abs(acc) > best_mag) {
      best_mag = std::abs(acc);
      best = k;
    }
  }
  return best;
}

AudioError::Kind error_kind(const std::vector<std::uint8_t>& bytes) {
  try {
    audio::parse_wav(bytes, "test");
  } catch (const AudioError& e) {
    return e.kind();
  }
  FAIL("expected AudioError");
  return AudioError::Kind::kInvalid;
}

}  // namespace

TEST_SUITE("audio") {
  TEST_CASE("one second of PCM16 silence") {
    const auto w = audio::parse_wav(wav_bytes(1, 1, 16000, 16, pcm16(std::vector<std::int16_t>(16000, 0))), "z");
    CHECK(w.sample_rate == 16000);
    REQUIRE(w.samples.size() == 16000);
    for (float s : w.samples) CHECK(s == 0.0f);
  }

  TEST_CASE("stereo channels are averaged") {
    std::vector<std::int16_t> inter;
    for (int i = 0; i < 100; ++i) {
      inter.push_back(16384);
      inter.push_back(-16384);
    }
    const auto w = audio::parse_wav(wav_bytes(1, 2, 16000, 16, pcm16(inter)), "st");
    REQUIRE(w.samples.size() == 100);
    for (float s : w.samples) CHECK(s == 0.0f);
  }

  TEST_CASE("PCM16 scaling is s / 32768") {
    const std::vector<std::int16_t> raw{-32768, -1, 0, 1, 16384, 32767};
    const auto w = audio::parse_wav(wav_bytes(1, 1, 8000, 16, pcm16(raw)), "pcm");
    REQUIRE(w.samples.size() == raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CHECK(w.samples[i] == static_cast<float>(raw[i] / 32768.0));
    }
    CHECK(w.samples[0] == -1.0f);
    CHECK(w.sample_rate == 8000);
  }

  TEST_CASE("float32 samples pass through") {
    const std::vector<float> raw{0.25f, -0.75f, 1.0f};
    const auto w = audio::parse_wav(wav_bytes(3, 1, 22050, 32, f32(raw)), "f");
    CHECK(w.samples == raw);
  }

  TEST_CASE("errors are reported by kind") {
    CHECK(error_kind({'n', 'o', 'p', 'e'}) == AudioError::Kind::kUnreadable);
    CHECK(error_kind(wav_bytes(2, 1, 16000, 4, {1, 2, 3, 4})) == AudioError::Kind::kUnsupported);
    CHECK(error_kind(wav_bytes(1, 1, 16000, 24, {1, 2, 3})) == AudioError::Kind::kUnsupported);
    CHECK(error_kind(wav_bytes(1, 1, 16000, 16, {})) == AudioError::Kind::kEmpty);
    try {
      audio::load_wav("/nonexistent/file.wav");
      FAIL("expected AudioError");
    } catch (const AudioError& e) {
      CHECK(e.kind() == AudioError::Kind::kUnreadable);
    }
  }

  TEST_CASE("write then load round-trips PCM16") {
    const auto path = std::filesystem::temp_directory_path() / "coattn_audio_rt.wav";
    audio::Waveform w = sine(440.0, 16000, 1000);
    audio::write_wav(path, w);
    const auto back = audio::load_wav(path);
    REQUIRE(back.samples.size() == w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      CHECK(std::abs(back.samples[i] - w.samples[i]) <= 1.0f / 32768.0f);
    }
    std::filesystem::remove(path);
  }

  TEST_CASE("resample identity path") {
    const audio::Waveform w = sine(300.0, 16000, 4000);
    const auto out = audio::resample(w, 16000);
    CHECK(out.samples == w.samples);
    CHECK(out.sample_rate == 16000);
  }

  TEST_CASE("resampled constant stays constant away from the edges") {
    audio::Waveform w;
    w.sample_rate = 48000;
    w.samples.assign(48000, 0.3f);
    const auto out = audio::resample(w, 16000);
    REQUIRE(out.samples.size() == 16000);
    double worst = 0.0;
    for (std::size_t i = 100; i + 100 < out.samples.size(); ++i) {
      worst = std::max(worst, std::abs(out.samples[i] - 0.3));
    }
    CHECK(worst < 1e-3);
  }

  TEST_CASE("1 kHz sine keeps its frequency through 48 kHz -> 16 kHz") {
    const auto out = audio::resample(sine(1000.0, 48000, 4800), 16000);
    REQUIRE(out.samples.size() == 1600);
    // 1600-point DFT at 16 kHz: 10 Hz per bin.
    CHECK(dft_peak(out.samples) == 100);
  }

  TEST_CASE("up then down resampling recovers a band-limited signal") {
    audio::Waveform w = sine(440.0, 16000, 8000, 0.4);
    const auto tone2 = sine(2500.0, 16000, 8000, 0.3);
    for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] += tone2.samples[i];
    const auto back = audio::resample(audio::resample(w, 32000), 16000);
    REQUIRE(back.samples.size() == w.samples.size());
    double worst = 0.0;
    for (std::size_t i = 200; i + 200 < w.samples.size(); ++i) {
      worst = std::max(worst, static_cast<double>(std::abs(back.samples[i] - w.samples[i])));
    }
    CHECK(worst < 1e-2);
  }

  TEST_CASE("resample duration within one output sample") {
    for (int rate : {8000, 22050, 44100, 48000}) {
      const auto w = sine(200.0, rate, static_cast<std::size_t>(rate) * 3 / 2 + 7);
      const auto out = audio::resample(w, 16000);
      const double expected = static_cast<double>(w.samples.size()) * 16000.0 / rate;
      CHECK(std::abs(static_cast<double>(out.samples.size()) - expected) <= 1.0);
    }
    CHECK_THROWS_AS(audio::resample(sine(1.0, 16000, 10), 0), AudioError);
  }

  TEST_CASE("segmentation arithmetic") {
    audio::Waveform w;
    w.samples.assign(48000, 0.5f);
    auto segs = audio::segment(w, "u");
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].valid_samples == 48000);

    w.samples.assign(112000, 0.5f);
    segs = audio::segment(w, "u");
    REQUIRE(segs.size() == 3);
    CHECK(segs[2].valid_samples == 16000);
    CHECK(segs[2].samples[15999] == 0.5f);
    for (std::size_t i = 16000; i < 48000; ++i) REQUIRE(segs[2].samples[i] == 0.0f);
    CHECK(segs[1].index == 1);
    CHECK(segs[1].source_utterance == "u");

    w.samples.assign(1, 0.25f);
    segs = audio::segment(w, "u");
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].samples[0] == 0.25f);
    for (std::size_t i = 1; i < 48000; ++i) REQUIRE(segs[0].samples[i] == 0.0f);

    w.samples.clear();
    CHECK_THROWS_AS(audio::segment(w, "u"), AudioError);
  }

  TEST_CASE("segments concatenate back to the waveform") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      audio::Waveform w;
      w.samples.resize(1 + rng.below(200000));
      for (float& s : w.samples) s = static_cast<float>(rng.uniform(-1.0, 1.0));
      const auto segs = audio::segment(w, "r");
      CHECK(segs.size() == (w.samples.size() + 47999) / 48000);
      std::vector<float> flat;
      for (const auto& s : segs) {
        REQUIRE(s.samples.size() == 48000);
        flat.insert(flat.end(), s.samples.begin(), s.samples.end());
      }
      flat.resize(w.samples.size());
      CHECK(flat == w.samples);
    }
  }
}
