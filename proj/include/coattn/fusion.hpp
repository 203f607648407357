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

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coattn/checkpoint.hpp"
#include "coattn/encoders.hpp"

namespace coattn {

enum class Emotion { kAngry = 0, kSad = 1, kHappy = 2, kNeutral = 3 };
inline constexpr std::size_t kNumClasses = 4;

std::string_view emotion_name(int label);

struct Prediction {
  std::array<double, kNumClasses> logits{};
  std::array<double, kNumClasses> probabilities{};
  int label = 0;
};

// Softmax over the logits; argmax with ties going to the lowest index.
Prediction make_prediction(std::span<const double> logits);

// Argmax of a probability vector, lowest index on ties.
int argmax_label(std::span<const double> probabilities);

}  // namespace coattn

namespace coattn::model {

enum class AttentionMode { kRaw, kSoftmax };

// Which branches feed the classifier and how the embedding sequence is
// pooled. Defaults give the full model.
struct ModelConfig {
  bool use_mfcc = true;
  bool use_spectrogram = true;
  bool use_embedding = true;
  // Attention pooling of the embedding sequence; mean pooling when false.
  bool coattention = true;
  // Sources of the attention weights.
  bool attend_mfcc = true;
  bool attend_spectrogram = true;
  AttentionMode attention = AttentionMode::kSoftmax;

  MfccEncoderConfig mfcc;
  SpectrogramEncoderConfig spectrogram;
  std::size_t embedding_frames = 149;
  std::size_t embedding_dim = 768;

  bool attends() const {
    return use_embedding && coattention && (attend_mfcc || attend_spectrogram);
  }
  bool needs_mfcc() const { return use_mfcc || (attends() && attend_mfcc); }
  bool needs_spectrogram() const {
    return use_spectrogram || (attends() && attend_spectrogram);
  }
  std::size_t attention_in_dim() const;
  std::size_t fused_dim() const;
  // Throws std::invalid_argument for inconsistent settings.
  void validate() const;
};

// Attention weights from the available branch features, B x frames.
// Either feature tensor may be undefined; at least one must be present.
template <typename T>
Tensor<T> coattention_weights(const Tensor<T>& x_mfcc, const Tensor<T>& x_spec,
                              const Linear<T>& f_att, AttentionMode mode);

// weights: B x T, embeddings: B x T x D -> B x D.
template <typename T>
Tensor<T> pool_embeddings(const Tensor<T>& weights, const Tensor<T>& embeddings);

// Uniform mean over the frame axis, B x T x D -> B x D.
template <typename T>
Tensor<T> mean_pool_embeddings(const Tensor<T>& embeddings);

// Concatenates the defined parts in the order (mfcc, spectrogram, pooled).
template <typename T>
Tensor<T> fuse(const Tensor<T>& x_mfcc, const Tensor<T>& x_spec,
               const Tensor<T>& x_pooled);

// Fused vector -> class logits, B x kNumClasses.
template <typename T>
Tensor<T> classify(const Tensor<T>& fused, const Linear<T>& f);

// Model inputs for a batch. Tensors for branches the model does not need may
// be left undefined.
template <typename T>
struct Batch {
  Tensor<T> mfcc;         // B x 94 x 40
  Tensor<T> spectrogram;  // B x 300 x 200
  Tensor<T> embedding;    // B x 149 x 768
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;   // B x C
  Tensor<T> fused;    // B x fused_dim
  Tensor<T> pooled;   // B x D, undefined without the embedding branch
  Tensor<T> weights;  // B x frames, undefined without attention
};

template <typename T>
class CoAttentionModel {
 public:
  CoAttentionModel(const ModelConfig& config, std::uint64_t seed);

  ForwardResult<T> forward(const Batch<T>& batch, bool train, Rng& dropout) const;

  NamedParameters<T> named_parameters() const;
  std::vector<Tensor<T>> parameters() const;

  Checkpoint to_checkpoint() const;
  // Copies values by name; throws std::runtime_error on a missing or
  // mis-shaped entry.
  void load(const Checkpoint& ckpt);

  const ModelConfig& config() const { return config_; }

  // Number of batches each encoder has processed.
  std::size_t mfcc_calls() const { return counters_->mfcc; }
  std::size_t spectrogram_calls() const { return counters_->spectrogram; }

 private:
  struct Counters {
    std::atomic<std::size_t> mfcc{0};
    std::atomic<std::size_t> spectrogram{0};
  };

  ModelConfig config_;
  std::optional<MfccEncoder<T>> mfcc_;
  std::optional<SpectrogramEncoder<T>> spectrogram_;
  std::optional<Linear<T>> attention_;
  Linear<T> classifier_;
  std::unique_ptr<Counters> counters_;
};

// One row of the ablation grid.
struct AblationRow {
  std::string name;
  ModelConfig config;
};

// The ten branch/pooling combinations, single branches first, then the
// embedding combinations with mean pooling, then with attention pooling.
std::vector<AblationRow> ablation_grid(const ModelConfig& base);

}  // namespace coattn::model
