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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coattn/checkpoint.hpp"
#include "coattn/features.hpp"
#include "coattn/fusion.hpp"

namespace coattn {

struct TrainConfig {
  double lr = 1e-5;
  std::size_t batch_size = 64;
  std::size_t patience = 8;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  // Share of training utterances held out for early stopping.
  double validation_fraction = 0.1;
  // Stop once an epoch's running segment accuracy reaches this value.
  std::optional<double> stop_at_train_accuracy;
  model::ModelConfig model;

  // Throws std::invalid_argument.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  // Segment level, measured on the fly in training mode.
  double train_wa = 0.0;
  double train_ua = 0.0;
  // Utterance level on the held-out utterances; NaN without a holdout.
  double val_wa = 0.0;
  double val_ua = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::string stop_reason;

  // One JSON object per epoch, newline separated.
  std::string to_jsonl() const;
  void save(const std::filesystem::path& path) const;
};

// Tracks the best value of a metric to maximise; stops after `patience`
// consecutive epochs without strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  // Returns true when `value` improves on the best so far.
  bool observe(double value);
  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }
  std::size_t epochs_seen() const { return seen_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  std::size_t seen_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;  // parameters of the best epoch
  TrainHistory history;
  std::vector<std::string> validation_ids;
  // Batches run through each encoder, validation included.
  std::size_t mfcc_calls = 0;
  std::size_t spectrogram_calls = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Segment-level training on the given utterances. Throws on an empty fold and
// on a non-finite loss.
TrainResult train(const Dataset& data, std::span<const std::string> train_ids,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// Index of one segment inside a dataset.
struct SegmentRef {
  std::size_t utterance = 0;
  std::size_t segment = 0;
};

// Every segment of the listed utterances, in listing order.
std::vector<SegmentRef> segment_refs(const Dataset& data, std::span<const std::string> ids);

// Shuffles `refs` in place and cuts it into consecutive batches of at most
// `batch_size` segments.
std::vector<std::vector<SegmentRef>> epoch_batches(std::span<SegmentRef> refs,
                                                   std::size_t batch_size, Rng& rng);

// Stacks the selected features of `refs` into model inputs.
template <typename T>
model::Batch<T> make_batch(const Dataset& data, std::span<const SegmentRef> refs,
                           FeatureSelection selection);

// Mean of the segment probabilities; label by argmax, lowest index on ties.
Prediction predict_utterance(std::span<const Prediction> segments);

struct UtterancePrediction {
  std::string id;
  int truth = 0;
  Prediction prediction;
  std::vector<Prediction> segments;
};

// Eval-mode inference over every segment of the listed utterances.
std::vector<UtterancePrediction> predict_utterances(
    const model::CoAttentionModel<float>& model, const Dataset& data,
    std::span<const std::string> ids, std::size_t batch_size = 64);

// Segment-level fused vectors and pooled embeddings in eval mode.
struct SegmentVectors {
  std::string id;
  std::size_t segment = 0;
  int truth = 0;
  std::vector<float> pooled;
  std::vector<float> fused;
};
std::vector<SegmentVectors> segment_vectors(const model::CoAttentionModel<float>& model,
                                            const Dataset& data,
                                            std::span<const std::string> ids,
                                            std::size_t batch_size = 64);

}  // namespace coattn
