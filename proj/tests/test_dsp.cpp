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

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "coattn/dsp.hpp"
#include "coattn/rng.hpp"
#include "doctest.h"

using namespace coattn;

namespace {

audio::AudioSegment make_segment(const std::vector<float>& samples) {
  audio::AudioSegment seg;
  seg.samples = samples;
  seg.samples.resize(audio::kSegmentSamples, 0.0f);
  seg.valid_samples = std::min(samples.size(), audio::kSegmentSamples);
  return seg;
}

audio::AudioSegment tone_segment(double freq, double amp) {
  std::vector<float> s(audio::kSegmentSamples);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq *
                                             static_cast<double>(i) / 16000.0));
  }
  return make_segment(s);
}

audio::AudioSegment noise_segment(std::uint64_t seed, double amp) {
  Rng rng(seed);
  std::vector<float> s(audio::kSegmentSamples);
  for (float& v : s) v = static_cast<float>(amp * rng.uniform(-1.0, 1.0));
  return make_segment(s);
}

std::vector<dsp::Complex> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<dsp::Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    dsp::Complex acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi *
                                        static_cast<double>((k * i) % n) / n);
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("windows") {
    const auto hann = dsp::make_window(dsp::Window::kHann, 8);
    CHECK(hann[0] == doctest::Approx(0.0));
    CHECK(hann[4] == doctest::Approx(1.0));
    CHECK(hann[2] == doctest::Approx(0.5));
    const auto ham = dsp::make_window(dsp::Window::kHamming, 8);
    CHECK(ham[0] == doctest::Approx(0.08));
    CHECK(ham[4] == doctest::Approx(1.0));
    for (double v : dsp::make_window(dsp::Window::kRectangular, 5)) CHECK(v == 1.0);
  }

  TEST_CASE("stft matches a direct DFT of each windowed frame") {
    Rng rng(11);
    std::vector<double> signal(1000);
    for (double& v : signal) v = rng.uniform(-1.0, 1.0);
    const dsp::StftOptions opt{100, 37, 128, dsp::Window::kHamming};
    const auto spec = dsp::stft(signal, opt);
    REQUIRE(spec.rows == (1000 - 100) / 37 + 1);
    REQUIRE(spec.cols == 65);
    const auto win = dsp::make_window(opt.window, opt.window_len);
    double worst = 0.0;
    for (std::size_t f = 0; f < spec.rows; ++f) {
      std::vector<double> frame(opt.dft_len, 0.0);
      for (std::size_t i = 0; i < opt.window_len; ++i) {
        frame[i] = signal[f * opt.hop + i] * win[i];
      }
      const auto ref = naive_dft(frame);
      for (std::size_t k = 0; k < spec.cols; ++k) {
        worst = std::max(worst, std::abs(spec(f, k) - ref[k]));
      }
    }
    CHECK(worst < 1e-8);
  }

  TEST_CASE("Parseval holds per frame") {
    Rng rng(12);
    std::vector<double> signal(4000);
    for (double& v : signal) v = rng.normal();
    for (auto window : {dsp::Window::kRectangular, dsp::Window::kHamming}) {
      const dsp::StftOptions opt{640, 160, 800, window};
      const auto spec = dsp::stft(signal, opt);
      const auto win = dsp::make_window(opt.window, opt.window_len);
      for (std::size_t f = 0; f < spec.rows; ++f) {
        double time_energy = 0.0;
        for (std::size_t i = 0; i < opt.window_len; ++i) {
          const double v = signal[f * opt.hop + i] * win[i];
          time_energy += v * v;
        }
        // One-sided bins stand in for their conjugate mirrors.
        const std::size_t half = opt.dft_len / 2;
        double freq_energy = std::norm(spec(f, 0)) + std::norm(spec(f, half));
        for (std::size_t k = 1; k < half; ++k) freq_energy += 2.0 * std::norm(spec(f, k));
        CHECK(std::abs(freq_energy / static_cast<double>(opt.dft_len) - time_energy) <
              1e-6 * time_energy);
      }
    }
  }

  TEST_CASE("stft of zeros and DC") {
    const std::vector<double> zeros(1000, 0.0);
    const dsp::StftOptions rect{64, 32, 64, dsp::Window::kRectangular};
    for (const auto& c : dsp::stft(zeros, rect).values) CHECK(std::abs(c) == 0.0);
    const std::vector<double> dc(1000, 1.0);
    const auto spec = dsp::stft(dc, rect);
    for (std::size_t f = 0; f < spec.rows; ++f) {
      CHECK(spec(f, 0).real() == doctest::Approx(64.0));
      for (std::size_t k = 1; k < spec.cols; ++k) CHECK(std::abs(spec(f, k)) < 1e-9);
    }
  }

  TEST_CASE("spectrogram image geometry") {
    const auto silent = dsp::spectrogram_image(make_segment({}));
    CHECK(silent.rows == 300);
    CHECK(silent.cols == 200);
    for (double v : silent.values) REQUIRE(v == 0.0);

    const auto img = dsp::spectrogram_image(tone_segment(1000.0, 0.5));
    for (std::size_t f : {0u, 150u, 290u}) {
      const auto row = img.row(f);
      const auto peak = std::max_element(row.begin(), row.end()) - row.begin();
      CHECK(peak == 50);
    }
    for (double v : img.values) REQUIRE(v >= 0.0);
  }

  TEST_CASE("mel scale") {
    CHECK(dsp::hz_to_mel(0.0) == 0.0);
    CHECK(dsp::hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
    CHECK(dsp::hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-4));
    for (double hz : {50.0, 440.0, 3000.0, 7999.0}) {
      CHECK(dsp::mel_to_hz(dsp::hz_to_mel(hz)) == doctest::Approx(hz));
    }
  }

  TEST_CASE("single mel filter peaks at its centre") {
    // One band between 0 and 8000 Hz: centre at the mel midpoint.
    const auto fb = dsp::mel_filterbank(1, 8001, 16000.0, 0.0, 8000.0);
    REQUIRE(fb.rows == 1);
    const auto row = fb.row(0);
    const auto peak = std::max_element(row.begin(), row.end()) - row.begin();
    const double centre = dsp::mel_to_hz(dsp::hz_to_mel(8000.0) / 2.0);
    CHECK(std::abs(static_cast<double>(peak) - centre) <= 1.0);
    CHECK(row[0] == 0.0);
    CHECK(std::abs(row[8000]) < 1e-12);
  }

  TEST_CASE("MFCC filterbank has no empty bands") {
    const auto fb = dsp::mel_filterbank(128, 1025, 16000.0, 0.0, 8000.0);
    for (std::size_t m = 0; m < fb.rows; ++m) {
      double sum = 0.0;
      for (double v : fb.row(m)) {
        REQUIRE(v >= 0.0);
        sum += v;
      }
      CHECK(sum > 0.0);
    }
    CHECK_THROWS_AS(dsp::mel_filterbank(10, 100, 16000.0, 5000.0, 1000.0),
                    std::invalid_argument);
  }

  TEST_CASE("dct2_ortho is orthonormal") {
    Rng rng(5);
    std::vector<double> x(16);
    for (double& v : x) v = rng.normal();
    const auto y = dsp::dct2_ortho(x);
    double ex = 0.0, ey = 0.0;
    for (double v : x) ex += v * v;
    for (double v : y) ey += v * v;
    CHECK(ey == doctest::Approx(ex));
    const std::vector<double> ones(16, 1.0);
    const auto c = dsp::dct2_ortho(ones);
    CHECK(c[0] == doctest::Approx(4.0));
    for (std::size_t k = 1; k < c.size(); ++k) CHECK(std::abs(c[k]) < 1e-12);
  }

  TEST_CASE("MFCC shape and the silent segment") {
    const auto m = dsp::mfcc(make_segment({}));
    REQUIRE(m.rows == 94);
    REQUIRE(m.cols == 40);
    const double c0 = std::log(1e-10) * std::sqrt(128.0);
    for (std::size_t t = 0; t < m.rows; ++t) {
      CHECK(m(t, 0) == doctest::Approx(c0));
      for (std::size_t k = 1; k < m.cols; ++k) REQUIRE(std::abs(m(t, k)) < 1e-9);
    }
  }

  TEST_CASE("scaling the waveform only moves coefficient 0") {
    const auto seg = noise_segment(8, 0.1);
    auto louder = seg;
    for (float& v : louder.samples) v *= 4.0f;  // exact in binary floating point
    const auto a = dsp::mfcc(seg);
    const auto b = dsp::mfcc(louder);
    const double shift = 2.0 * std::log(4.0) * std::sqrt(128.0);
    for (std::size_t t = 0; t < a.rows; ++t) {
      CHECK(std::abs(b(t, 0) - a(t, 0) - shift) < 1e-6);
      for (std::size_t k = 1; k < a.cols; ++k) {
        REQUIRE(std::abs(b(t, k) - a(t, k)) < 1e-6);
      }
    }
  }

  TEST_CASE("features are deterministic") {
    const auto seg = noise_segment(21, 0.3);
    CHECK(dsp::mfcc(seg) == dsp::mfcc(seg));
    CHECK(dsp::spectrogram_image(seg) == dsp::spectrogram_image(seg));
  }

  TEST_CASE("invalid segments are rejected") {
    audio::AudioSegment seg = make_segment({});
    seg.samples.resize(100);
    CHECK_THROWS_AS(dsp::mfcc(seg), audio::AudioError);
    seg = make_segment({});
    seg.samples[7] = std::nanf("");
    CHECK_THROWS_AS(dsp::spectrogram_image(seg), audio::AudioError);
  }
}
