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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coattn/features.hpp"
#include "coattn/manifest.hpp"
#include "coattn/metrics.hpp"
#include "coattn/training.hpp"

namespace coattn {

enum class SplitStrategy { kSession, kSpeaker };

std::string_view strategy_name(SplitStrategy s);
// Throws std::invalid_argument for anything but "session" / "speaker".
SplitStrategy parse_strategy(std::string_view name);

struct Fold {
  std::size_t index = 0;
  SplitStrategy strategy = SplitStrategy::kSession;
  std::string held_out;  // session number or speaker id
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

// Fold k tests on session k + 1. Throws if any of sessions 1..5 is empty.
std::vector<Fold> split_session(const Manifest& manifest);
// Fold k tests on the k-th speaker ordered by (session, gender, id). Throws
// unless there are exactly 10 speakers.
std::vector<Fold> split_speaker(const Manifest& manifest);
std::vector<Fold> make_folds(const Manifest& manifest, SplitStrategy strategy);

struct FoldResult {
  std::size_t fold = 0;
  std::string held_out;
  MetricsReport utterance;
  MetricsReport segment;
  TrainHistory history;
  Checkpoint checkpoint;
  std::vector<UtterancePrediction> predictions;
  // Encoder batches over training and scoring.
  std::size_t mfcc_calls = 0;
  std::size_t spectrogram_calls = 0;
};

struct CrossValidationResult {
  std::string config_name;
  SplitStrategy strategy = SplitStrategy::kSession;
  std::vector<FoldResult> folds;
  // All folds' test predictions pooled before computing the metrics.
  MetricsReport pooled_utterance;
  MetricsReport pooled_segment;
  // Unweighted mean of the per-fold utterance metrics.
  double mean_wa = 0.0;
  double mean_ua = 0.0;

  // Records {config, strategy, fold, level, WA, UA, confusion}: one per fold
  // and level, then the pooled and mean aggregates.
  std::string metrics_jsonl() const;
};

struct CrossValidationOptions {
  std::string config_name = "full";
  // When set: fold_<k>.ckpt, fold_<k>.history.jsonl and metrics.jsonl.
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::size_t> max_folds;  // run only the first n folds
  std::function<void(const FoldResult&)> on_fold;
  EpochCallback on_epoch;
};

// Seed used for fold `k` given the run seed.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

CrossValidationResult cross_validate(const Dataset& data, const Manifest& manifest,
                                     SplitStrategy strategy, const TrainConfig& config,
                                     const CrossValidationOptions& options = {});

// Re-scores saved fold checkpoints (fold_<k>.ckpt in `dir`) on their test
// folds. Histories are left empty.
CrossValidationResult evaluate_checkpoints(const Dataset& data, const Manifest& manifest,
                                           SplitStrategy strategy,
                                           const TrainConfig& config,
                                           const std::filesystem::path& dir,
                                           const CrossValidationOptions& options = {});

CrossValidationResult summarize(std::string config_name, SplitStrategy strategy,
                                std::vector<FoldResult> folds);

struct AblationResult {
  std::string name;
  model::ModelConfig config;
  CrossValidationResult cv;
  std::size_t mfcc_calls = 0;
  std::size_t spectrogram_calls = 0;
};

struct AblationOptions {
  // When set: ablation.csv and ablation_metrics.jsonl.
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::size_t> max_folds;
  std::function<void(const AblationResult&)> on_row;
};

// Cross-validates every row of model::ablation_grid in order, each on a copy
// of `data` holding only the features that row uses. Errors are
// rethrown as std::runtime_error naming the configuration.
std::vector<AblationResult> run_ablation(const Dataset& data, const Manifest& manifest,
                                         SplitStrategy strategy, const TrainConfig& base,
                                         const AblationOptions& options = {});

// model,WA,UA,WA_fold_mean,UA_fold_mean
std::string ablation_csv(const std::vector<AblationResult>& rows);

struct ExportSummary {
  std::size_t rows = 0;
  std::size_t pooled_width = 0;
  std::size_t fused_width = 0;
};

// Writes utterance_id,segment,label,v0..v(D-1) rows for the pooled
// embeddings and the fused vectors. The pooled file is skipped when the model
// has no embedding branch.
ExportSummary export_features(const model::CoAttentionModel<float>& model,
                              const Dataset& data, std::span<const std::string> ids,
                              const std::filesystem::path& pooled_csv,
                              const std::filesystem::path& fused_csv);

}  // namespace coattn
