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

#include "coattn/features.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "coattn/dsp.hpp"
#include "coattn/feature_io.hpp"

namespace coattn {
namespace {

// Bump when any feature recipe changes so stale caches are recomputed.
constexpr std::string_view kRecipeVersion = "features-v1";

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw audio::AudioError(audio::AudioError::Kind::kUnreadable,
                            "cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

bool caches_embedding(const model::EmbeddingProvider* provider) {
  // File-backed embeddings already live on disk.
  return provider != nullptr && provider->name() != "file";
}

}  // namespace

FeatureSelection FeatureSelection::for_model(const model::ModelConfig& config) {
  return {config.needs_mfcc(), config.needs_spectrogram(), config.use_embedding};
}

SegmentFeatures extract_segment(const audio::AudioSegment& seg,
                                const model::EmbeddingProvider* provider,
                                FeatureSelection selection) {
  dsp::validate_segment(seg);
  SegmentFeatures f;
  if (selection.mfcc) f.mfcc = matrix_cast<float>(dsp::mfcc(seg));
  if (selection.spectrogram) {
    f.spectrogram = matrix_cast<float>(dsp::spectrogram_image(seg));
  }
  if (selection.embedding) {
    if (provider == nullptr) {
      throw std::invalid_argument("embedding requested without a provider");
    }
    f.embedding = model::embed_audio(seg, *provider);
  }
  return f;
}

audio::Waveform load_utterance_audio(const std::filesystem::path& path) {
  return audio::resample(audio::load_wav(path), audio::kTargetRate);
}

std::vector<SegmentFeatures> extract_utterance(const audio::Waveform& wave,
                                               const std::string& utterance_id,
                                               const model::EmbeddingProvider* provider,
                                               FeatureSelection selection) {
  std::vector<SegmentFeatures> out;
  for (const auto& seg : audio::segment(wave, utterance_id)) {
    out.push_back(extract_segment(seg, provider, selection));
  }
  return out;
}

std::string content_hash(std::span<const std::uint8_t> bytes, std::string_view salt) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (char c : salt) mix(static_cast<std::uint8_t>(c));
  for (std::uint8_t b : bytes) mix(b);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

FeatureCache::FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path FeatureCache::mfcc_path(const std::string& uid,
                                              std::size_t k) const {
  return dir_ / (uid + ".seg" + std::to_string(k) + ".mfcc.fea");
}

std::filesystem::path FeatureCache::spectrogram_path(const std::string& uid,
                                                     std::size_t k) const {
  return dir_ / (uid + ".seg" + std::to_string(k) + ".spec.fea");
}

std::filesystem::path FeatureCache::embedding_path(const std::string& uid,
                                                   std::size_t k) const {
  return dir_ / embedding_filename(uid, k);
}

std::filesystem::path FeatureCache::stamp_path(const std::string& uid) const {
  return dir_ / (uid + ".stamp");
}

std::string FeatureCache::fingerprint(std::span<const std::uint8_t> wav_bytes,
                                      const model::EmbeddingProvider* provider,
                                      FeatureSelection selection) {
  std::string salt(kRecipeVersion);
  salt += selection.mfcc ? "|mfcc" : "";
  salt += selection.spectrogram ? "|spec" : "";
  if (selection.embedding && caches_embedding(provider)) salt += "|w2e:" + provider->name();
  return content_hash(wav_bytes, salt);
}

bool FeatureCache::up_to_date(const std::string& uid,
                              const std::string& fingerprint) const {
  std::ifstream is(stamp_path(uid));
  std::string stored;
  std::size_t segments = 0;
  if (!(is >> stored >> segments) || stored != fingerprint) return false;
  return true;
}

std::optional<std::vector<SegmentFeatures>> FeatureCache::load(
    const std::string& uid, const std::string& fingerprint,
    FeatureSelection selection) const {
  std::ifstream is(stamp_path(uid));
  std::string stored;
  std::size_t segments = 0;
  if (!(is >> stored >> segments) || stored != fingerprint) return std::nullopt;
  std::vector<SegmentFeatures> out(segments);
  try {
    for (std::size_t k = 0; k < segments; ++k) {
      if (selection.mfcc) out[k].mfcc = load_fea(mfcc_path(uid, k));
      if (selection.spectrogram) out[k].spectrogram = load_fea(spectrogram_path(uid, k));
      if (selection.embedding) out[k].embedding = load_w2e(embedding_path(uid, k));
    }
  } catch (const std::exception&) {
    return std::nullopt;  // partial or damaged entry; recompute
  }
  return out;
}

std::size_t FeatureCache::store(const std::string& uid, const std::string& fingerprint,
                                const std::vector<SegmentFeatures>& segments,
                                FeatureSelection selection) const {
  std::filesystem::create_directories(dir_);
  std::size_t written = 0;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    if (selection.mfcc) {
      save_fea(mfcc_path(uid, k), segments[k].mfcc);
      ++written;
    }
    if (selection.spectrogram) {
      save_fea(spectrogram_path(uid, k), segments[k].spectrogram);
      ++written;
    }
    if (selection.embedding) {
      save_w2e(embedding_path(uid, k), segments[k].embedding);
      ++written;
    }
  }
  // The stamp goes last so an interrupted write is never trusted.
  std::ofstream os(stamp_path(uid), std::ios::trunc);
  os << fingerprint << ' ' << segments.size() << '\n';
  if (!os) throw std::runtime_error("cannot write " + stamp_path(uid).string());
  return written + 1;
}

Dataset::Dataset(std::vector<Utterance> utterances) : utterances_(std::move(utterances)) {
  for (std::size_t i = 0; i < utterances_.size(); ++i) {
    if (!index_.emplace(utterances_[i].id, i).second) {
      throw std::invalid_argument("duplicate utterance in dataset: " + utterances_[i].id);
    }
  }
}

const Utterance& Dataset::at(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("utterance not in dataset: " + id);
  return utterances_[it->second];
}

std::size_t Dataset::segment_count() const {
  std::size_t n = 0;
  for (const auto& u : utterances_) n += u.segments.size();
  return n;
}

Dataset Dataset::project(FeatureSelection selection) const {
  std::vector<Utterance> kept = utterances_;
  for (auto& u : kept) {
    for (auto& s : u.segments) {
      if (!selection.mfcc) s.mfcc = {};
      if (!selection.spectrogram) s.spectrogram = {};
      if (!selection.embedding) s.embedding = {};
    }
  }
  return Dataset(std::move(kept));
}

Dataset build_dataset(const Manifest& manifest, const DatasetOptions& options,
                      ExtractReport* report) {
  const auto& records = manifest.records();
  const FeatureSelection sel = options.selection;
  FeatureSelection cached_sel = sel;
  cached_sel.embedding = sel.embedding && caches_embedding(options.provider);
  std::optional<FeatureCache> cache;
  if (options.cache_dir) cache.emplace(*options.cache_dir);

  struct Outcome {
    std::vector<SegmentFeatures> segments;
    bool from_cache = false;
    std::size_t written = 0;
    std::string error;
  };
  std::vector<Outcome> outcomes(records.size());

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(records.size()); ++i) {
    const ManifestRecord& r = records[static_cast<std::size_t>(i)];
    Outcome& out = outcomes[static_cast<std::size_t>(i)];
    try {
      const auto path = manifest.resolve(r);
      const auto bytes = read_bytes(path);
      std::string fp;
      if (cache) {
        fp = FeatureCache::fingerprint(bytes, options.provider, cached_sel);
        if (auto hit = cache->load(r.utterance_id, fp, cached_sel)) {
          out.segments = std::move(*hit);
          out.from_cache = true;
        }
      }
      if (!out.from_cache) {
        const auto wave = audio::resample(audio::parse_wav(bytes, path.string()),
                                          audio::kTargetRate);
        out.segments = extract_utterance(wave, r.utterance_id, options.provider, cached_sel);
        if (cache) out.written = cache->store(r.utterance_id, fp, out.segments, cached_sel);
      }
      if (sel.embedding && !cached_sel.embedding) {
        // Embeddings that are not cached come straight from the provider.
        for (std::size_t k = 0; k < out.segments.size(); ++k) {
          audio::AudioSegment seg;
          seg.samples.assign(audio::kSegmentSamples, 0.0f);
          seg.source_utterance = r.utterance_id;
          seg.index = k;
          seg.valid_samples = audio::kSegmentSamples;
          out.segments[k].embedding = model::embed_audio(seg, *options.provider);
        }
      }
    } catch (const std::exception& e) {
      out.segments.clear();
      out.error = e.what();
    }
  }

  ExtractReport local;
  std::vector<Utterance> utterances;
  for (std::size_t i = 0; i < records.size(); ++i) {
    Outcome& out = outcomes[i];
    if (!out.error.empty()) {
      local.failures.emplace_back(records[i].utterance_id, out.error);
      continue;
    }
    ++local.utterances;
    local.segments += out.segments.size();
    local.cached += out.from_cache ? 1 : 0;
    local.files_written += out.written;
    utterances.push_back({records[i].utterance_id, records[i].label, records[i].session,
                          records[i].speaker_id, std::move(out.segments)});
  }
  if (report != nullptr) {
    *report = std::move(local);
  } else if (!local.failures.empty()) {
    throw std::runtime_error("feature extraction failed for " +
                             local.failures.front().first + ": " +
                             local.failures.front().second);
  }
  return Dataset(std::move(utterances));
}

}  // namespace coattn
