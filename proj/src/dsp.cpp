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

#include "coattn/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <fftw3.h>

namespace coattn::dsp {
namespace {

constexpr double kPi = std::numbers::pi;

// FFTW's planner is not thread-safe; executing an existing plan on new arrays
// is. Plans are created once per size under a lock.
class RealFftPlans {
 public:
  static RealFftPlans& instance() {
    static RealFftPlans plans;
    return plans;
  }

  fftw_plan get(std::size_t n) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out,
                                          FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(n, plan);
    return plan;
  }

 private:
  RealFftPlans() = default;
  ~RealFftPlans() {
    for (auto& [n, plan] : plans_) fftw_destroy_plan(plan);
  }
  std::mutex mutex_;
  std::map<std::size_t, fftw_plan> plans_;
};

// Real-input DFT of `frame` (length n), writing n/2 + 1 bins.
void real_dft(std::vector<double>& frame, std::span<Complex> out) {
  fftw_plan plan = RealFftPlans::instance().get(frame.size());
  fftw_execute_dft_r2c(plan, frame.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

std::vector<double> to_double(std::span<const float> x) {
  return {x.begin(), x.end()};
}

// Mel weights with the nonzero span of every band, so that applying them
// skips the zeros outside each triangle.
struct BandedFilterbank {
  Matrix<double> weights;
  std::vector<std::pair<std::size_t, std::size_t>> spans;

  explicit BandedFilterbank(Matrix<double> fb) : weights(std::move(fb)) {
    for (std::size_t m = 0; m < weights.rows; ++m) {
      const auto row = weights.row(m);
      std::size_t lo = 0, hi = row.size();
      while (lo < hi && row[lo] == 0.0) ++lo;
      while (hi > lo && row[hi - 1] == 0.0) --hi;
      spans.emplace_back(lo, hi);
    }
  }

  // log(max(fb . power, floor)) per band.
  void log_energies(std::span<const double> power, std::span<double> out) const {
    for (std::size_t m = 0; m < weights.rows; ++m) {
      const auto row = weights.row(m);
      double e = 0.0;
      for (std::size_t k = spans[m].first; k < spans[m].second; ++k) e += row[k] * power[k];
      out[m] = std::log(std::max(e, kLogFloor));
    }
  }
};

// First kMfccCoefficients rows of the orthonormal DCT-II matrix of size
// kMfccMels; same values as dct2_ortho.
const Matrix<double>& mfcc_dct_basis() {
  static const Matrix<double> basis = [] {
    Matrix<double> b(kMfccCoefficients, kMfccMels);
    std::vector<double> unit(kMfccMels, 0.0);
    for (std::size_t i = 0; i < kMfccMels; ++i) {
      unit[i] = 1.0;
      const std::vector<double> column = dct2_ortho(unit);
      for (std::size_t k = 0; k < kMfccCoefficients; ++k) b(k, i) = column[k];
      unit[i] = 0.0;
    }
    return b;
  }();
  return basis;
}

const BandedFilterbank& mfcc_filterbank() {
  static const BandedFilterbank fb(
      mel_filterbank(kMfccMels, kMfccFft / 2 + 1, audio::kTargetRate, 0.0, 8000.0));
  return fb;
}

}  // namespace

std::vector<double> make_window(Window kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (kind == Window::kRectangular) return w;
  const double a0 = kind == Window::kHamming ? 0.54 : 0.5;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = a0 - (1.0 - a0) * std::cos(2.0 * kPi * static_cast<double>(i) /
                                      static_cast<double>(n));
  }
  return w;
}

Matrix<Complex> stft(std::span<const double> signal, const StftOptions& o) {
  if (o.hop == 0) throw std::invalid_argument("stft: hop must be positive");
  if (o.window_len == 0 || o.dft_len < o.window_len) {
    throw std::invalid_argument("stft: dft_len must be >= window_len > 0");
  }
  if (signal.size() < o.window_len) {
    throw std::invalid_argument("stft: signal of " + std::to_string(signal.size()) +
                                " samples is shorter than the window (" +
                                std::to_string(o.window_len) + ")");
  }
  const std::size_t frames = (signal.size() - o.window_len) / o.hop + 1;
  const std::size_t bins = o.dft_len / 2 + 1;
  const std::vector<double> window = make_window(o.window, o.window_len);
  Matrix<Complex> out(frames, bins);
#pragma omp parallel
  {
    std::vector<double> frame(o.dft_len);
#pragma omp for schedule(static)
    for (std::size_t f = 0; f < frames; ++f) {
      std::fill(frame.begin(), frame.end(), 0.0);
      const double* src = signal.data() + f * o.hop;
      for (std::size_t i = 0; i < o.window_len; ++i) frame[i] = src[i] * window[i];
      real_dft(frame, out.row(f));
    }
  }
  return out;
}

void validate_segment(const audio::AudioSegment& seg) {
  if (seg.samples.size() != audio::kSegmentSamples) {
    throw audio::AudioError(audio::AudioError::Kind::kInvalid,
                            "segment must hold " +
                                std::to_string(audio::kSegmentSamples) +
                                " samples, got " +
                                std::to_string(seg.samples.size()));
  }
  for (float s : seg.samples) {
    if (!std::isfinite(s)) {
      throw audio::AudioError(audio::AudioError::Kind::kInvalid,
                              "segment holds a non-finite sample");
    }
  }
}

Matrix<double> spectrogram_image(const audio::AudioSegment& seg) {
  validate_segment(seg);
  std::vector<double> signal = to_double(seg.samples);
  signal.resize(signal.size() + kSpectrogramTailPad, 0.0);
  const Matrix<Complex> spec =
      stft(signal, {kSpectrogramWindow, kSpectrogramHop, kSpectrogramDft,
                    Window::kHamming});
  Matrix<double> image(kSpectrogramFrames, kSpectrogramBins);
  for (std::size_t f = 0; f < kSpectrogramFrames; ++f) {
    for (std::size_t k = 0; k < kSpectrogramBins; ++k) {
      image(f, k) = std::log1p(std::abs(spec(f, k)));
    }
  }
  return image;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Matrix<double> mel_filterbank(std::size_t n_mels, std::size_t n_bins,
                              double sample_rate, double fmin, double fmax) {
  if (n_mels == 0 || n_bins < 2) {
    throw std::invalid_argument("mel_filterbank: need n_mels >= 1 and n_bins >= 2");
  }
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw std::invalid_argument("mel_filterbank: invalid frequency range [" +
                                std::to_string(fmin) + ", " +
                                std::to_string(fmax) + "]");
  }
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));
  }
  Matrix<double> fb(n_mels, n_bins);
  const double nyquist = sample_rate / 2.0;
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    const double norm = 2.0 / (right - left);
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = nyquist * static_cast<double>(k) / static_cast<double>(n_bins - 1);
      const double rising = (f - left) / (centre - left);
      const double falling = (right - f) / (right - centre);
      fb(m, k) = std::max(0.0, std::min(rising, falling)) * norm;
    }
  }
  return fb;
}

std::vector<double> dct2_ortho(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double s = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(kPi * static_cast<double>(k) *
                             (2.0 * static_cast<double>(i) + 1.0) /
                             (2.0 * static_cast<double>(n)));
    }
    out[k] = acc * (k == 0 ? s0 : s);
  }
  return out;
}

Matrix<double> mfcc(const audio::AudioSegment& seg) {
  validate_segment(seg);
  const std::size_t pad = kMfccFft / 2;
  const std::size_t n = seg.samples.size();
  // numpy-style reflect padding (edge sample not repeated).
  std::vector<double> padded(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) {
    padded[pad - 1 - i] = seg.samples[i + 1];
    padded[pad + n + i] = seg.samples[n - 2 - i];
  }
  std::copy(seg.samples.begin(), seg.samples.end(),
            padded.begin() + static_cast<std::ptrdiff_t>(pad));

  const Matrix<Complex> spec =
      stft(padded, {kMfccFft, kMfccHop, kMfccFft, Window::kHann});
  const BandedFilterbank& fb = mfcc_filterbank();
  Matrix<double> out(spec.rows, kMfccCoefficients);
  std::vector<double> power(spec.cols);
  std::vector<double> log_mel(kMfccMels);
  for (std::size_t f = 0; f < spec.rows; ++f) {
    for (std::size_t k = 0; k < spec.cols; ++k) power[k] = std::norm(spec(f, k));
    fb.log_energies(power, log_mel);
    const Matrix<double>& dct = mfcc_dct_basis();
    for (std::size_t k = 0; k < kMfccCoefficients; ++k) {
      const auto basis = dct.row(k);
      double acc = 0.0;
      for (std::size_t m = 0; m < kMfccMels; ++m) acc += basis[m] * log_mel[m];
      out(f, k) = acc;
    }
  }
  return out;
}

Matrix<double> log_mel_frames(std::span<const double> signal,
                              std::size_t window_len, std::size_t hop,
                              std::size_t n_fft, std::size_t n_mels) {
  const Matrix<Complex> spec = stft(signal, {window_len, hop, n_fft, Window::kHann});
  const BandedFilterbank fb(
      mel_filterbank(n_mels, n_fft / 2 + 1, audio::kTargetRate, 0.0, 8000.0));
  Matrix<double> out(spec.rows, n_mels);
  std::vector<double> power(spec.cols);
  for (std::size_t f = 0; f < spec.rows; ++f) {
    for (std::size_t k = 0; k < spec.cols; ++k) power[k] = std::norm(spec(f, k));
    fb.log_energies(power, out.row(f));
  }
  return out;
}

}  // namespace coattn::dsp
