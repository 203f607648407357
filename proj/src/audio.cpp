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

#include "coattn/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

namespace coattn::audio {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

constexpr double kKaiserBeta = 8.6;
constexpr double kRolloff = 0.94;
constexpr double kHalfTaps = 32.0;

std::uint16_t u16_at(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::uint32_t u32_at(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) |
         (static_cast<std::uint32_t>(b[off + 1]) << 8) |
         (static_cast<std::uint32_t>(b[off + 2]) << 16) |
         (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

// Kaiser window on |x| <= 1, tabulated and linearly interpolated.
class KaiserTable {
 public:
  static constexpr std::size_t kSize = 8192;
  explicit KaiserTable(double beta) : table_(kSize + 2) {
    const double norm = std::cyl_bessel_i(0.0, beta);
    for (std::size_t i = 0; i <= kSize; ++i) {
      const double x = static_cast<double>(i) / kSize;
      table_[i] = std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - x * x)) / norm;
    }
    table_[kSize + 1] = 0.0;
  }
  double operator()(double x) const {
    const double a = std::abs(x) * kSize;
    if (a > kSize) return 0.0;
    const auto i = static_cast<std::size_t>(a);
    const double frac = a - static_cast<double>(i);
    return table_[i] + frac * (table_[i + 1] - table_[i]);
  }

 private:
  std::vector<double> table_;
};

const KaiserTable& kaiser() {
  static const KaiserTable table(kKaiserBeta);
  return table;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

Waveform parse_wav(std::span<const std::uint8_t> b, const std::string& source) {
  using Kind = AudioError::Kind;
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
      std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw AudioError(Kind::kUnreadable, source + ": not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t size = u32_at(b, pos + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, b.size() - body);
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      if (avail < 16) throw AudioError(Kind::kUnreadable, source + ": short fmt chunk");
      format = u16_at(b, body);
      channels = u16_at(b, body + 2);
      rate = u32_at(b, body + 4);
      bits = u16_at(b, body + 14);
      if (format == kFormatExtensible && avail >= 26) format = u16_at(b, body + 24);
      have_fmt = true;
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      data = b.subspan(body, avail);
      have_data = true;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt || !have_data) {
    throw AudioError(Kind::kUnreadable, source + ": missing fmt or data chunk");
  }
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw AudioError(Kind::kUnsupported,
                     source + ": unsupported codec (format " +
                         std::to_string(format) + ", " + std::to_string(bits) +
                         " bits)");
  }
  if (channels == 0 || rate == 0) {
    throw AudioError(Kind::kUnreadable, source + ": invalid channel count or rate");
  }
  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frames = data.size() / (bytes_per_sample * channels);
  if (frames == 0) throw AudioError(Kind::kEmpty, source + ": zero-length audio");

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const std::size_t off = (f * channels + ch) * bytes_per_sample;
      if (pcm16) {
        acc += static_cast<std::int16_t>(u16_at(data, off)) / 32768.0;
      } else {
        acc += std::bit_cast<float>(u32_at(data, off));
      }
    }
    w.samples[f] = static_cast<float>(acc / channels);
    if (!std::isfinite(w.samples[f])) {
      throw AudioError(Kind::kInvalid, source + ": non-finite sample");
    }
  }
  return w;
}

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw AudioError(AudioError::Kind::kUnreadable,
                     path.string() + ": cannot open file");
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return parse_wav(bytes, path.string());
}

std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& w) {
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float s : w.samples) {
    const double scaled = std::round(static_cast<double>(s) * 32768.0);
    const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  const auto bytes = encode_wav_pcm16(w);
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw AudioError(AudioError::Kind::kUnreadable,
                     path.string() + ": cannot write file");
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0 || w.sample_rate <= 0) {
    throw AudioError(AudioError::Kind::kInvalid, "resample: rates must be positive");
  }
  if (w.samples.empty()) {
    throw AudioError(AudioError::Kind::kEmpty, "resample: empty waveform");
  }
  if (target_rate == w.sample_rate) return w;

  const double ratio = static_cast<double>(target_rate) / w.sample_rate;
  // Cutoff relative to the input rate, and kernel half-width in input samples.
  const double scale = std::min(1.0, ratio);
  const double cutoff = kRolloff * scale;
  const double half_width = kHalfTaps / scale;
  const auto n_in = static_cast<std::ptrdiff_t>(w.samples.size());
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(w.samples.size()) * ratio));

  const KaiserTable& window = kaiser();
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(std::max<std::size_t>(n_out, 1));
#pragma omp parallel for schedule(static)
  for (std::size_t n = 0; n < out.samples.size(); ++n) {
    const double center = static_cast<double>(n) / ratio;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(center - half_width));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(center + half_width));
    double acc = 0.0;
    double gain = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double t = static_cast<double>(k) - center;
      const double h = cutoff * sinc(cutoff * t) * window(t / half_width);
      gain += h;
      if (k >= 0 && k < n_in) acc += h * w.samples[static_cast<std::size_t>(k)];
    }
    out.samples[n] = static_cast<float>(gain != 0.0 ? acc / gain : 0.0);
  }
  return out;
}

std::size_t segment_count(std::size_t samples) {
  return std::max<std::size_t>(1, (samples + kSegmentSamples - 1) / kSegmentSamples);
}

std::vector<AudioSegment> segment(const Waveform& w,
                                  const std::string& utterance_id) {
  if (w.samples.empty()) {
    throw AudioError(AudioError::Kind::kEmpty, "segment: empty waveform");
  }
  if (w.sample_rate != kTargetRate) {
    throw AudioError(AudioError::Kind::kInvalid,
                     "segment: expected 16000 Hz audio, got " +
                         std::to_string(w.sample_rate));
  }
  const std::size_t count = segment_count(w.samples.size());
  std::vector<AudioSegment> out(count);
  for (std::size_t s = 0; s < count; ++s) {
    AudioSegment& seg = out[s];
    seg.source_utterance = utterance_id;
    seg.index = s;
    seg.samples.assign(kSegmentSamples, 0.0f);
    const std::size_t begin = s * kSegmentSamples;
    const std::size_t end = std::min(begin + kSegmentSamples, w.samples.size());
    std::copy(w.samples.begin() + static_cast<std::ptrdiff_t>(begin),
              w.samples.begin() + static_cast<std::ptrdiff_t>(end),
              seg.samples.begin());
    seg.valid_samples = end - begin;
  }
  return out;
}

}  // namespace coattn::audio
