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

#include "coattn/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "json.hpp"

namespace coattn {
namespace {

using nlohmann::ordered_json;

ordered_json confusion_json(const ConfusionMatrix& c) {
  ordered_json rows = ordered_json::array();
  for (const auto& row : c) rows.push_back(row);
  return rows;
}

ordered_json record(const std::string& config, SplitStrategy strategy, ordered_json fold,
                    const char* level, double wa, double ua, ordered_json confusion) {
  ordered_json j;
  j["config"] = config;
  j["strategy"] = strategy_name(strategy);
  j["fold"] = std::move(fold);
  j["level"] = level;
  j["WA"] = wa;
  j["UA"] = ua;
  j["confusion"] = std::move(confusion);
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

FoldResult score_fold(const model::CoAttentionModel<float>& model, const Dataset& data,
                      const Fold& fold, std::size_t batch_size) {
  FoldResult r;
  r.fold = fold.index;
  r.held_out = fold.held_out;
  r.predictions = predict_utterances(model, data, fold.test_ids, batch_size);
  std::vector<int> up, ut, sp, st;
  for (const auto& p : r.predictions) {
    up.push_back(p.prediction.label);
    ut.push_back(p.truth);
    for (const auto& s : p.segments) {
      sp.push_back(s.label);
      st.push_back(p.truth);
    }
  }
  r.utterance = compute_metrics(up, ut);
  r.segment = compute_metrics(sp, st);
  r.mfcc_calls = model.mfcc_calls();
  r.spectrogram_calls = model.spectrogram_calls();
  return r;
}

std::size_t fold_limit(const std::vector<Fold>& folds,
                       const std::optional<std::size_t>& max_folds) {
  return max_folds ? std::min(*max_folds, folds.size()) : folds.size();
}

void write_csv_rows(std::ostream& os, const std::vector<SegmentVectors>& rows,
                    bool pooled) {
  const std::size_t width = pooled ? rows.front().pooled.size() : rows.front().fused.size();
  os << "utterance_id,segment,label";
  for (std::size_t d = 0; d < width; ++d) os << ",v" << d;
  os << '\n';
  char buf[32];
  for (const auto& r : rows) {
    os << r.id << ',' << r.segment << ',' << emotion_name(r.truth);
    for (float v : pooled ? r.pooled : r.fused) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace

std::string_view strategy_name(SplitStrategy s) {
  return s == SplitStrategy::kSession ? "session" : "speaker";
}

SplitStrategy parse_strategy(std::string_view name) {
  if (name == "session") return SplitStrategy::kSession;
  if (name == "speaker") return SplitStrategy::kSpeaker;
  throw std::invalid_argument("unknown strategy '" + std::string(name) +
                              "' (expected session or speaker)");
}

std::vector<Fold> split_session(const Manifest& manifest) {
  std::vector<Fold> folds(5);
  for (std::size_t k = 0; k < 5; ++k) {
    folds[k].index = k;
    folds[k].strategy = SplitStrategy::kSession;
    folds[k].held_out = std::to_string(k + 1);
  }
  for (const auto& r : manifest.records()) {
    const auto test = static_cast<std::size_t>(r.session - 1);
    for (std::size_t k = 0; k < 5; ++k) {
      (k == test ? folds[k].test_ids : folds[k].train_ids).push_back(r.utterance_id);
    }
  }
  for (const auto& f : folds) {
    if (f.test_ids.empty()) {
      throw std::invalid_argument("split_session: session " + f.held_out +
                                  " has no utterances");
    }
  }
  return folds;
}

std::vector<Fold> split_speaker(const Manifest& manifest) {
  // speaker -> (lowest session, gender)
  std::map<std::string, std::pair<int, std::string>> speakers;
  for (const auto& r : manifest.records()) {
    auto [it, fresh] = speakers.emplace(r.speaker_id, std::pair{r.session, r.gender});
    if (!fresh) it->second.first = std::min(it->second.first, r.session);
  }
  if (speakers.size() != 10) {
    throw std::invalid_argument("split_speaker: expected 10 speakers, found " +
                                std::to_string(speakers.size()));
  }
  std::vector<std::tuple<int, std::string, std::string>> order;
  for (const auto& [id, info] : speakers) order.emplace_back(info.first, info.second, id);
  std::sort(order.begin(), order.end());

  std::vector<Fold> folds(order.size());
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t k = 0; k < order.size(); ++k) {
    folds[k].index = k;
    folds[k].strategy = SplitStrategy::kSpeaker;
    folds[k].held_out = std::get<2>(order[k]);
    fold_of[folds[k].held_out] = k;
  }
  for (const auto& r : manifest.records()) {
    const std::size_t test = fold_of.at(r.speaker_id);
    for (std::size_t k = 0; k < folds.size(); ++k) {
      (k == test ? folds[k].test_ids : folds[k].train_ids).push_back(r.utterance_id);
    }
  }
  return folds;
}

std::vector<Fold> make_folds(const Manifest& manifest, SplitStrategy strategy) {
  return strategy == SplitStrategy::kSession ? split_session(manifest)
                                             : split_speaker(manifest);
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
  return seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(fold) + 1);
}

std::string CrossValidationResult::metrics_jsonl() const {
  std::string out;
  for (const auto& f : folds) {
    out += record(config_name, strategy, f.fold, "utterance", f.utterance.wa,
                  f.utterance.ua, confusion_json(f.utterance.confusion))
               .dump() +
           '\n';
    out += record(config_name, strategy, f.fold, "segment", f.segment.wa, f.segment.ua,
                  confusion_json(f.segment.confusion))
               .dump() +
           '\n';
  }
  out += record(config_name, strategy, "pooled", "utterance", pooled_utterance.wa,
                pooled_utterance.ua, confusion_json(pooled_utterance.confusion))
             .dump() +
         '\n';
  out += record(config_name, strategy, "pooled", "segment", pooled_segment.wa,
                pooled_segment.ua, confusion_json(pooled_segment.confusion))
             .dump() +
         '\n';
  out += record(config_name, strategy, "mean", "utterance", mean_wa, mean_ua, nullptr)
             .dump() +
         '\n';
  return out;
}

CrossValidationResult summarize(std::string config_name, SplitStrategy strategy,
                                std::vector<FoldResult> folds) {
  if (folds.empty()) throw std::invalid_argument("summarize: no folds");
  CrossValidationResult cv;
  cv.config_name = std::move(config_name);
  cv.strategy = strategy;
  ConfusionMatrix utt{}, seg{};
  for (const auto& f : folds) {
    for (std::size_t t = 0; t < kNumClasses; ++t) {
      for (std::size_t p = 0; p < kNumClasses; ++p) {
        utt[t][p] += f.utterance.confusion[t][p];
        seg[t][p] += f.segment.confusion[t][p];
      }
    }
    cv.mean_wa += f.utterance.wa;
    cv.mean_ua += f.utterance.ua;
  }
  cv.mean_wa /= static_cast<double>(folds.size());
  cv.mean_ua /= static_cast<double>(folds.size());
  cv.pooled_utterance = metrics_from_confusion(utt);
  cv.pooled_segment = metrics_from_confusion(seg);
  cv.folds = std::move(folds);
  return cv;
}

CrossValidationResult cross_validate(const Dataset& data, const Manifest& manifest,
                                     SplitStrategy strategy, const TrainConfig& config,
                                     const CrossValidationOptions& options) {
  const auto folds = make_folds(manifest, strategy);
  const std::size_t n = fold_limit(folds, options.max_folds);
  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);

  std::vector<FoldResult> results;
  for (std::size_t k = 0; k < n; ++k) {
    TrainConfig fold_config = config;
    fold_config.seed = fold_seed(config.seed, k);
    TrainResult trained = train(data, folds[k].train_ids, fold_config, options.on_epoch);

    model::CoAttentionModel<float> model(config.model, 0);
    model.load(trained.checkpoint);
    FoldResult r = score_fold(model, data, folds[k], config.batch_size);
    r.history = std::move(trained.history);
    r.mfcc_calls += trained.mfcc_calls;
    r.spectrogram_calls += trained.spectrogram_calls;
    r.checkpoint = std::move(trained.checkpoint);
    if (options.out_dir) {
      const auto stem = *options.out_dir / ("fold_" + std::to_string(k));
      save_checkpoint(stem.string() + ".ckpt", r.checkpoint);
      r.history.save(stem.string() + ".history.jsonl");
    }
    if (options.on_fold) options.on_fold(r);
    results.push_back(std::move(r));
  }
  auto cv = summarize(options.config_name, strategy, std::move(results));
  if (options.out_dir) write_text(*options.out_dir / "metrics.jsonl", cv.metrics_jsonl());
  return cv;
}

CrossValidationResult evaluate_checkpoints(const Dataset& data, const Manifest& manifest,
                                           SplitStrategy strategy,
                                           const TrainConfig& config,
                                           const std::filesystem::path& dir,
                                           const CrossValidationOptions& options) {
  const auto folds = make_folds(manifest, strategy);
  const std::size_t n = fold_limit(folds, options.max_folds);
  std::vector<FoldResult> results;
  for (std::size_t k = 0; k < n; ++k) {
    const auto path = dir / ("fold_" + std::to_string(k) + ".ckpt");
    if (!std::filesystem::exists(path)) {
      throw std::runtime_error("missing checkpoint " + path.string());
    }
    model::CoAttentionModel<float> model(config.model, 0);
    model.load(load_checkpoint(path));
    FoldResult r = score_fold(model, data, folds[k], config.batch_size);
    if (options.on_fold) options.on_fold(r);
    results.push_back(std::move(r));
  }
  auto cv = summarize(options.config_name, strategy, std::move(results));
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    write_text(*options.out_dir / "metrics.jsonl", cv.metrics_jsonl());
  }
  return cv;
}

std::vector<AblationResult> run_ablation(const Dataset& data, const Manifest& manifest,
                                         SplitStrategy strategy, const TrainConfig& base,
                                         const AblationOptions& options) {
  std::vector<AblationResult> rows;
  std::string jsonl;
  for (const auto& row : model::ablation_grid(base.model)) {
    TrainConfig config = base;
    config.model = row.config;
    CrossValidationOptions cv_options;
    cv_options.config_name = row.name;
    cv_options.max_folds = options.max_folds;
    try {
      const Dataset view = data.project(FeatureSelection::for_model(row.config));
      AblationResult result{row.name, row.config,
                            cross_validate(view, manifest, strategy, config, cv_options)};
      for (auto& f : result.cv.folds) {
        result.mfcc_calls += f.mfcc_calls;
        result.spectrogram_calls += f.spectrogram_calls;
        f.checkpoint = {};  // not needed past this point
      }
      jsonl += result.cv.metrics_jsonl();
      if (options.on_row) options.on_row(result);
      rows.push_back(std::move(result));
    } catch (const std::exception& e) {
      throw std::runtime_error("ablation configuration '" + row.name + "': " + e.what());
    }
  }
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    write_text(*options.out_dir / "ablation.csv", ablation_csv(rows));
    write_text(*options.out_dir / "ablation_metrics.jsonl", jsonl);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationResult>& rows) {
  std::ostringstream os;
  os << "model,WA,UA,WA_fold_mean,UA_fold_mean\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f", r.cv.pooled_utterance.wa,
                  r.cv.pooled_utterance.ua, r.cv.mean_wa, r.cv.mean_ua);
    os << '"' << r.name << '"' << buf << '\n';
  }
  return os.str();
}

ExportSummary export_features(const model::CoAttentionModel<float>& model,
                              const Dataset& data, std::span<const std::string> ids,
                              const std::filesystem::path& pooled_csv,
                              const std::filesystem::path& fused_csv) {
  const auto rows = segment_vectors(model, data, ids);
  ExportSummary summary;
  summary.rows = rows.size();
  if (rows.empty()) throw std::invalid_argument("export_features: no segments");
  summary.fused_width = rows.front().fused.size();
  summary.pooled_width = rows.front().pooled.size();
  {
    std::ofstream os(fused_csv, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + fused_csv.string());
    write_csv_rows(os, rows, false);
  }
  if (summary.pooled_width > 0 && !pooled_csv.empty()) {
    std::ofstream os(pooled_csv, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + pooled_csv.string());
    write_csv_rows(os, rows, true);
  }
  return summary;
}

}  // namespace coattn
