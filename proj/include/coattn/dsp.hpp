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

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "coattn/audio.hpp"
#include "coattn/matrix.hpp"

namespace coattn::dsp {

using Complex = std::complex<double>;

enum class Window { kRectangular, kHamming, kHann };

// Periodic (DFT-even) window of length n.
std::vector<double> make_window(Window kind, std::size_t n);

struct StftOptions {
  std::size_t window_len = 640;
  std::size_t hop = 160;
  std::size_t dft_len = 800;
  Window window = Window::kHamming;
};

// Frame f covers [f*hop, f*hop + window_len), is windowed, zero-padded to
// dft_len and transformed. Returns frames x (dft_len/2 + 1) one-sided bins;
// the remaining bins are the conjugate mirror. Frame count is
// floor((len - window_len) / hop) + 1.
Matrix<Complex> stft(std::span<const double> signal, const StftOptions& options);

// Spectrogram image geometry: 40 ms Hamming window, 10 ms hop, 800-point DFT,
// first 200 bins, log(1 + |X|). 480 trailing zeros give exactly 300 frames.
inline constexpr std::size_t kSpectrogramFrames = 300;
inline constexpr std::size_t kSpectrogramBins = 200;
inline constexpr std::size_t kSpectrogramWindow = 640;
inline constexpr std::size_t kSpectrogramHop = 160;
inline constexpr std::size_t kSpectrogramDft = 800;
inline constexpr std::size_t kSpectrogramTailPad = 480;

Matrix<double> spectrogram_image(const audio::AudioSegment& seg);

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filters with centres equally spaced on the HTK mel scale between
// fmin and fmax, evaluated at n_bins linearly spaced frequencies in
// [0, sample_rate / 2] and area-normalised (each filter scaled by
// 2 / bandwidth in Hz). Throws std::invalid_argument on a bad range.
Matrix<double> mel_filterbank(std::size_t n_mels, std::size_t n_bins,
                              double sample_rate, double fmin, double fmax);

// Orthonormal DCT-II of one vector.
std::vector<double> dct2_ortho(std::span<const double> x);

// MFCC geometry: centred frames with reflect padding, periodic Hann window,
// 2048-point FFT, hop 512, 128 HTK mel bands over 0-8000 Hz, natural log with
// floor 1e-10, orthonormal DCT-II, first 40 coefficients.
inline constexpr std::size_t kMfccFrames = 94;
inline constexpr std::size_t kMfccCoefficients = 40;
inline constexpr std::size_t kMfccFft = 2048;
inline constexpr std::size_t kMfccHop = 512;
inline constexpr std::size_t kMfccMels = 128;
inline constexpr double kLogFloor = 1e-10;

Matrix<double> mfcc(const audio::AudioSegment& seg);

// Log-mel frames without centring: Hann window of window_len, hop, FFT of
// n_fft points, n_mels HTK bands over 0-8000 Hz, natural log with floor 1e-10.
Matrix<double> log_mel_frames(std::span<const double> signal,
                              std::size_t window_len, std::size_t hop,
                              std::size_t n_fft, std::size_t n_mels);

// Throws audio::AudioError unless the segment is a valid 48000-sample block.
void validate_segment(const audio::AudioSegment& seg);

}  // namespace coattn::dsp
