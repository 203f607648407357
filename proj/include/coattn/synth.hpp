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

#include "coattn/audio.hpp"
#include "coattn/manifest.hpp"
#include "coattn/rng.hpp"

namespace coattn {

struct SynthOptions {
  std::uint64_t seed = 1;
  std::size_t utterances_per_speaker = 20;
  double min_seconds = 2.0;
  double max_seconds = 8.0;
};

// One utterance of class `label`: a harmonic tone whose fundamental is
// shifted by `speaker_scale`, plus band-limited noise in a class-specific
// band. 16 kHz mono.
audio::Waveform synth_utterance(int label, double speaker_scale, double seconds,
                                Rng& rng);

struct SynthCorpus {
  Manifest manifest;
  std::filesystem::path manifest_path;
};

// Ten speakers (one female, one male per session 1..5), classes balanced per
// speaker. Writes <out>/wav/*.wav and <out>/manifest.csv. Output bytes are a
// function of the options alone.
SynthCorpus generate_corpus(const std::filesystem::path& out_dir,
                            const SynthOptions& options = {});

}  // namespace coattn
