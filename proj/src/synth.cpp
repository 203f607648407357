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

#include "coattn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace coattn {
namespace {

struct ClassRecipe {
  double f0;          // Hz before the speaker shift
  int harmonics;
  double rolloff;     // amplitude ratio between successive harmonics
  double noise_lo;    // Hz
  double noise_hi;
  double noise_gain;  // relative to the tone
  double vibrato;     // relative depth at 5 Hz
};

// angry, sad, happy, neutral
constexpr ClassRecipe kRecipes[] = {
    {220.0, 8, 0.95, 2000.0, 4000.0, 0.6, 0.0},
    {110.0, 2, 0.40, 80.0, 500.0, 0.3, 0.0},
    {330.0, 4, 0.70, 1000.0, 2000.0, 0.4, 0.03},
    {165.0, 3, 0.55, 500.0, 1000.0, 0.3, 0.0},
};

constexpr int kPartials = 24;  // sinusoids per noise band

// Adds amplitude * sin(phase + 2 pi f n / rate) using a rotating phasor.
void add_sinusoid(std::vector<double>& out, double freq, double phase, double amplitude) {
  const double w = 2.0 * std::numbers::pi * freq / audio::kTargetRate;
  std::complex<double> z = std::polar(1.0, phase);
  const std::complex<double> step = std::polar(1.0, w);
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] += amplitude * z.imag();
    z *= step;
    if ((n & 1023) == 1023) z /= std::abs(z);  // keep the phasor on the unit circle
  }
}

}  // namespace

audio::Waveform synth_utterance(int label, double speaker_scale, double seconds,
                                Rng& rng) {
  if (label < 0 || label > 3) throw std::out_of_range("synth: label out of range");
  const ClassRecipe& rc = kRecipes[label];
  const auto n = static_cast<std::size_t>(std::llround(seconds * audio::kTargetRate));
  std::vector<double> x(n, 0.0);

  const double f0 = rc.f0 * speaker_scale;
  if (rc.vibrato > 0.0) {
    // Phase accumulation for the frequency-modulated tone.
    std::vector<double> phase(rc.harmonics, rng.uniform(0.0, 2.0 * std::numbers::pi));
    const double vib_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / audio::kTargetRate;
      const double f = f0 * (1.0 + rc.vibrato * std::sin(2.0 * std::numbers::pi * 5.0 * t +
                                                         vib_phase));
      double amp = 1.0;
      for (int h = 0; h < rc.harmonics; ++h) {
        phase[h] += 2.0 * std::numbers::pi * f * (h + 1) / audio::kTargetRate;
        x[i] += amp * std::sin(phase[h]);
        amp *= rc.rolloff;
      }
    }
  } else {
    double amp = 1.0;
    for (int h = 0; h < rc.harmonics; ++h) {
      add_sinusoid(x, f0 * (h + 1), rng.uniform(0.0, 2.0 * std::numbers::pi), amp);
      amp *= rc.rolloff;
    }
  }
  const double partial_gain = rc.noise_gain / std::sqrt(static_cast<double>(kPartials));
  for (int p = 0; p < kPartials; ++p) {
    add_sinusoid(x, rng.uniform(rc.noise_lo, rc.noise_hi),
                 rng.uniform(0.0, 2.0 * std::numbers::pi), partial_gain);
  }
  for (double& v : x) v += 0.01 * rng.normal();

  // 20 ms fades, then scale the peak to a random level.
  const std::size_t fade = std::min<std::size_t>(n / 2, audio::kTargetRate / 50);
  for (std::size_t i = 0; i < fade; ++i) {
    const double g = static_cast<double>(i) / static_cast<double>(fade);
    x[i] *= g;
    x[n - 1 - i] *= g;
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double gain = rng.uniform(0.3, 0.7) / std::max(peak, 1e-12);

  audio::Waveform w;
  w.sample_rate = audio::kTargetRate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = static_cast<float>(x[i] * gain);
  return w;
}

SynthCorpus generate_corpus(const std::filesystem::path& out_dir,
                            const SynthOptions& options) {
  if (!(options.min_seconds > 0.0 && options.max_seconds >= options.min_seconds)) {
    throw std::invalid_argument("synth: invalid duration range");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wav", ec);
  if (ec) {
    throw std::runtime_error("synth: cannot create " + (out_dir / "wav").string() + ": " +
                             ec.message());
  }

  Rng root(options.seed);
  std::vector<ManifestRecord> records;
  std::size_t speaker_index = 0;
  for (int session = 1; session <= 5; ++session) {
    for (const char* gender : {"F", "M"}) {
      char speaker[16];
      std::snprintf(speaker, sizeof speaker, "Ses%02d%s", session, gender);
      // Spread the speakers' fundamentals over roughly +-12%.
      const double scale = 0.88 + 0.24 * static_cast<double>(speaker_index) / 9.0;
      Rng speaker_rng = root.fork();
      for (std::size_t u = 0; u < options.utterances_per_speaker; ++u) {
        const int label = static_cast<int>(u % 4);
        Rng rng = speaker_rng.fork();
        const double seconds = rng.uniform(options.min_seconds, options.max_seconds);
        const audio::Waveform w = synth_utterance(label, scale, seconds, rng);

        char uid[32];
        std::snprintf(uid, sizeof uid, "%s_u%03zu", speaker, u);
        ManifestRecord r;
        r.utterance_id = uid;
        r.wav_path = std::filesystem::path("wav") / (std::string(uid) + ".wav");
        r.session = session;
        r.speaker_id = speaker;
        r.gender = gender;
        static constexpr const char* kRaw[] = {"angry", "sad", "happy", "neutral"};
        // Every other happy utterance carries the "excited" tag.
        r.raw_label = (label == 2 && (u / 4) % 2 == 1) ? "excited" : kRaw[label];
        r.label = label;
        audio::write_wav(out_dir / r.wav_path, w);
        records.push_back(std::move(r));
      }
      ++speaker_index;
    }
  }
  SynthCorpus corpus{Manifest(std::move(records), out_dir), out_dir / "manifest.csv"};
  write_manifest(corpus.manifest_path, corpus.manifest);
  return corpus;
}

}  // namespace coattn
