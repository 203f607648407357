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
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "coattn/audio.hpp"
#include "coattn/encoders.hpp"
#include "coattn/fusion.hpp"
#include "coattn/manifest.hpp"
#include "coattn/matrix.hpp"

namespace coattn {

// Which per-segment features to compute.
struct FeatureSelection {
  bool mfcc = true;
  bool spectrogram = true;
  bool embedding = true;

  static FeatureSelection for_model(const model::ModelConfig& config);
};

struct SegmentFeatures {
  Matrix<float> mfcc;         // 94 x 40
  Matrix<float> spectrogram;  // 300 x 200
  Matrix<float> embedding;    // frames x dim
};

// `provider` may be null when no embedding is selected.
SegmentFeatures extract_segment(const audio::AudioSegment& seg,
                                const model::EmbeddingProvider* provider,
                                FeatureSelection selection);

// Loads a WAV and resamples it to 16 kHz.
audio::Waveform load_utterance_audio(const std::filesystem::path& path);

std::vector<SegmentFeatures> extract_utterance(const audio::Waveform& wave,
                                               const std::string& utterance_id,
                                               const model::EmbeddingProvider* provider,
                                               FeatureSelection selection);

// 64-bit FNV-1a, hex encoded.
std::string content_hash(std::span<const std::uint8_t> bytes, std::string_view salt = {});

// Per-segment FEA1/W2E1 files plus one stamp per utterance recording the
// source fingerprint and segment count. Files for an utterance are only
// trusted when the stamp matches.
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path dir);

  std::filesystem::path mfcc_path(const std::string& uid, std::size_t k) const;
  std::filesystem::path spectrogram_path(const std::string& uid, std::size_t k) const;
  std::filesystem::path embedding_path(const std::string& uid, std::size_t k) const;
  std::filesystem::path stamp_path(const std::string& uid) const;

  // Fingerprint of the source audio plus the feature recipe.
  static std::string fingerprint(std::span<const std::uint8_t> wav_bytes,
                                 const model::EmbeddingProvider* provider,
                                 FeatureSelection selection);

  bool up_to_date(const std::string& uid, const std::string& fingerprint) const;
  std::optional<std::vector<SegmentFeatures>> load(const std::string& uid,
                                                   const std::string& fingerprint,
                                                   FeatureSelection selection) const;
  // Returns the number of files written.
  std::size_t store(const std::string& uid, const std::string& fingerprint,
                    const std::vector<SegmentFeatures>& segments,
                    FeatureSelection selection) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

struct Utterance {
  std::string id;
  int label = 0;
  int session = 0;
  std::string speaker;
  std::vector<SegmentFeatures> segments;
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Utterance> utterances);

  const std::vector<Utterance>& utterances() const { return utterances_; }
  const Utterance& at(const std::string& id) const;
  std::size_t segment_count() const;
  // Copy keeping only the selected feature kinds.
  Dataset project(FeatureSelection selection) const;

 private:
  std::vector<Utterance> utterances_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct DatasetOptions {
  const model::EmbeddingProvider* provider = nullptr;
  FeatureSelection selection;
  std::optional<std::filesystem::path> cache_dir;
};

struct ExtractReport {
  std::size_t utterances = 0;
  std::size_t segments = 0;
  std::size_t cached = 0;         // utterances served from the cache
  std::size_t files_written = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // id, message
};

// Computes (or reads from the cache) the features of every utterance.
// Utterances are processed concurrently; results keep manifest order.
// Failing utterances are reported and left out of the dataset.
Dataset build_dataset(const Manifest& manifest, const DatasetOptions& options,
                      ExtractReport* report = nullptr);

}  // namespace coattn
