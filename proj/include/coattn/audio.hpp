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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coattn::audio {

inline constexpr int kTargetRate = 16000;
inline constexpr std::size_t kSegmentSamples = 48000;  // 3 s at 16 kHz

struct Waveform {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  int sample_rate = kTargetRate;
};

struct AudioSegment {
  std::vector<float> samples;  // exactly kSegmentSamples
  std::string source_utterance;
  std::size_t index = 0;
  std::size_t valid_samples = 0;  // real samples before zero padding
};

class AudioError : public std::runtime_error {
 public:
  enum class Kind { kUnreadable, kUnsupported, kEmpty, kInvalid };
  AudioError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Reads a RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float samples.
// Channels are averaged to mono; PCM is scaled by 1/32768.
Waveform load_wav(const std::filesystem::path& path);
Waveform parse_wav(std::span<const std::uint8_t> bytes, const std::string& source);

// Writes 16-bit PCM mono. Samples are clipped to [-1, 32767/32768].
void write_wav(const std::filesystem::path& path, const Waveform& w);
std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& w);

// Band-limited resampling with a Kaiser-windowed sinc (beta 8.6) spanning 64
// taps at the lower of the two rates, cutoff 0.94 of that rate's Nyquist
// frequency. Output length is round(len * target / source).
Waveform resample(const Waveform& w, int target_rate);

// Non-overlapping 3 s segments; the last is zero-padded.
std::vector<AudioSegment> segment(const Waveform& w,
                                  const std::string& utterance_id = {});

// ceil(samples / kSegmentSamples), at least 1.
std::size_t segment_count(std::size_t samples);

}  // namespace coattn::audio
