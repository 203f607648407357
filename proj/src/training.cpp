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

#include "coattn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "coattn/metrics.hpp"
#include "coattn/optim.hpp"
#include "json.hpp"

namespace coattn {
namespace {

using model::CoAttentionModel;
using Tensor = ad::Tensor<float>;

// Runs the model over `refs` in eval mode and hands each batch result to `sink`.
template <typename Sink>
void run_eval(const CoAttentionModel<float>& model, const Dataset& data,
              std::span<const SegmentRef> refs, std::size_t batch_size, Sink&& sink) {
  const ad::NoGradGuard no_grad;
  const FeatureSelection sel = FeatureSelection::for_model(model.config());
  Rng unused(0);
  const std::size_t step = std::max<std::size_t>(batch_size, 1);
  for (std::size_t begin = 0; begin < refs.size(); begin += step) {
    const auto chunk = refs.subspan(begin, std::min(step, refs.size() - begin));
    const auto batch = make_batch<float>(data, chunk, sel);
    sink(chunk, model.forward(batch, false, unused));
  }
}

double json_number(double v) {
  return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must lie in [0, 1)");
  }
  model.validate();
}

std::string TrainHistory::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["train_WA"] = e.train_wa;
    j["train_UA"] = e.train_ua;
    if (std::isnan(e.val_ua)) {
      j["val_WA"] = nullptr;
      j["val_UA"] = nullptr;
    } else {
      j["val_WA"] = json_number(e.val_wa);
      j["val_UA"] = json_number(e.val_ua);
    }
    j["best_epoch"] = best_epoch;
    out += j.dump() + '\n';
  }
  return out;
}

void TrainHistory::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << to_jsonl();
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw std::invalid_argument("patience must be >= 1");
}

bool EarlyStopping::observe(double value) {
  ++seen_;
  if (seen_ == 1 || value > best_) {
    best_ = value;
    best_epoch_ = seen_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

std::vector<SegmentRef> segment_refs(const Dataset& data,
                                     std::span<const std::string> ids) {
  std::vector<SegmentRef> refs;
  for (const auto& id : ids) {
    const Utterance& u = data.at(id);
    const std::size_t index = static_cast<std::size_t>(&u - data.utterances().data());
    for (std::size_t k = 0; k < u.segments.size(); ++k) refs.push_back({index, k});
  }
  return refs;
}

std::vector<std::vector<SegmentRef>> epoch_batches(std::span<SegmentRef> refs,
                                                   std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw std::invalid_argument("epoch_batches: batch size 0");
  rng.shuffle(refs);
  std::vector<std::vector<SegmentRef>> out;
  for (std::size_t begin = 0; begin < refs.size(); begin += batch_size) {
    const auto chunk = refs.subspan(begin, std::min(batch_size, refs.size() - begin));
    out.emplace_back(chunk.begin(), chunk.end());
  }
  return out;
}

template <typename T>
model::Batch<T> make_batch(const Dataset& data, std::span<const SegmentRef> refs,
                           FeatureSelection selection) {
  if (refs.empty()) throw std::invalid_argument("make_batch: no segments");
  auto stack = [&](auto member, const char* what) {
    const auto& first =
        data.utterances()[refs[0].utterance].segments[refs[0].segment].*member;
    const std::size_t rows = first.rows, cols = first.cols;
    if (rows * cols == 0) {
      throw std::invalid_argument(std::string("make_batch: ") + what +
                                  " features were not extracted");
    }
    std::vector<T> values;
    values.reserve(refs.size() * rows * cols);
    for (const SegmentRef& r : refs) {
      const auto& m = data.utterances()[r.utterance].segments[r.segment].*member;
      if (m.rows != rows || m.cols != cols) {
        throw ad::ShapeError(std::string("make_batch: inconsistent ") + what + " shape");
      }
      values.insert(values.end(), m.values.begin(), m.values.end());
    }
    return ad::Tensor<T>::from({refs.size(), rows, cols}, std::move(values));
  };
  model::Batch<T> batch;
  if (selection.mfcc) batch.mfcc = stack(&SegmentFeatures::mfcc, "mfcc");
  if (selection.spectrogram) {
    batch.spectrogram = stack(&SegmentFeatures::spectrogram, "spectrogram");
  }
  if (selection.embedding) batch.embedding = stack(&SegmentFeatures::embedding, "embedding");
  return batch;
}

template model::Batch<float> make_batch(const Dataset&, std::span<const SegmentRef>,
                                        FeatureSelection);
template model::Batch<double> make_batch(const Dataset&, std::span<const SegmentRef>,
                                         FeatureSelection);

Prediction predict_utterance(std::span<const Prediction> segments) {
  if (segments.empty()) throw std::invalid_argument("predict_utterance: no segments");
  if (segments.size() == 1) return segments.front();
  Prediction out;
  for (const Prediction& p : segments) {
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      out.logits[c] += p.logits[c];
      out.probabilities[c] += p.probabilities[c];
    }
  }
  const double n = static_cast<double>(segments.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out.logits[c] /= n;
    out.probabilities[c] /= n;
  }
  out.label = argmax_label(out.probabilities);
  return out;
}

std::vector<UtterancePrediction> predict_utterances(
    const CoAttentionModel<float>& model, const Dataset& data,
    std::span<const std::string> ids, std::size_t batch_size) {
  const auto refs = segment_refs(data, ids);
  std::vector<Prediction> seg_preds;
  seg_preds.reserve(refs.size());
  run_eval(model, data, refs, batch_size,
           [&](std::span<const SegmentRef> chunk, const model::ForwardResult<float>& r) {
             const auto logits = r.logits.data();
             for (std::size_t i = 0; i < chunk.size(); ++i) {
               double row[kNumClasses];
               for (std::size_t c = 0; c < kNumClasses; ++c) {
                 row[c] = logits[i * kNumClasses + c];
               }
               seg_preds.push_back(make_prediction(row));
             }
           });
  std::vector<UtterancePrediction> out;
  std::size_t cursor = 0;
  for (const auto& id : ids) {
    const Utterance& u = data.at(id);
    UtterancePrediction up;
    up.id = id;
    up.truth = u.label;
    up.segments.assign(seg_preds.begin() + static_cast<std::ptrdiff_t>(cursor),
                       seg_preds.begin() +
                           static_cast<std::ptrdiff_t>(cursor + u.segments.size()));
    cursor += u.segments.size();
    up.prediction = predict_utterance(up.segments);
    out.push_back(std::move(up));
  }
  return out;
}

std::vector<SegmentVectors> segment_vectors(const CoAttentionModel<float>& model,
                                            const Dataset& data,
                                            std::span<const std::string> ids,
                                            std::size_t batch_size) {
  const auto refs = segment_refs(data, ids);
  std::vector<SegmentVectors> out;
  run_eval(model, data, refs, batch_size,
           [&](std::span<const SegmentRef> chunk, const model::ForwardResult<float>& r) {
             for (std::size_t i = 0; i < chunk.size(); ++i) {
               const Utterance& u = data.utterances()[chunk[i].utterance];
               SegmentVectors v;
               v.id = u.id;
               v.segment = chunk[i].segment;
               v.truth = u.label;
               const std::size_t fd = r.fused.dim(1);
               const auto fused = r.fused.data().subspan(i * fd, fd);
               v.fused.assign(fused.begin(), fused.end());
               if (r.pooled.defined()) {
                 const std::size_t pd = r.pooled.dim(1);
                 const auto pooled = r.pooled.data().subspan(i * pd, pd);
                 v.pooled.assign(pooled.begin(), pooled.end());
               }
               out.push_back(std::move(v));
             }
           });
  return out;
}

TrainResult train(const Dataset& data, std::span<const std::string> train_ids,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_ids.empty()) throw std::invalid_argument("train: empty training fold");

  Rng root(config.seed);
  Rng split_rng = root.fork();
  Rng shuffle_rng = root.fork();
  Rng dropout_rng = root.fork();
  const std::uint64_t init_seed = root.next_u64();

  // Utterance-level holdout for early stopping.
  std::vector<std::string> ids(train_ids.begin(), train_ids.end());
  split_rng.shuffle(std::span<std::string>(ids));
  auto n_val = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(ids.size())));
  n_val = std::min(n_val, ids.size() - 1);
  TrainResult result;
  result.validation_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(result.validation_ids.begin(), result.validation_ids.end());
  std::vector<std::string> fit_ids(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  std::sort(fit_ids.begin(), fit_ids.end());

  std::vector<SegmentRef> refs = segment_refs(data, fit_ids);
  if (refs.empty()) throw std::invalid_argument("train: training fold has no segments");

  CoAttentionModel<float> model(config.model, init_seed);
  ad::AdamWOptions opt;
  opt.lr = config.lr;
  opt.weight_decay = config.weight_decay;
  ad::AdamW<float> optimizer(model.parameters(), opt);
  const FeatureSelection sel = FeatureSelection::for_model(config.model);

  EarlyStopping stopper(config.patience);
  result.checkpoint = model.to_checkpoint();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    std::vector<int> preds, truths;
    preds.reserve(refs.size());
    truths.reserve(refs.size());

    for (const auto& chunk : epoch_batches(refs, config.batch_size, shuffle_rng)) {
      std::vector<int> labels;
      for (const SegmentRef& r : chunk) labels.push_back(data.utterances()[r.utterance].label);

      const auto batch = make_batch<float>(data, std::span<const SegmentRef>(chunk), sel);
      const auto out = model.forward(batch, true, dropout_rng);
      const Tensor loss = ad::cross_entropy(out.logits, std::span<const int>(labels));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "train: non-finite loss " << value << " at epoch " << epoch << ", after "
            << preds.size() << " segments";
        throw std::runtime_error(msg.str());
      }
      optimizer.zero_grad();
      ad::backward(loss);
      optimizer.step();

      loss_sum += value * static_cast<double>(chunk.size());
      const auto logits = out.logits.data();
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        const auto row = logits.subspan(i * kNumClasses, kNumClasses);
        preds.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) -
                                         row.begin()));
        truths.push_back(labels[i]);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(refs.size());
    const MetricsReport train_metrics = compute_metrics(preds, truths);
    rec.train_wa = train_metrics.wa;
    rec.train_ua = train_metrics.ua;
    double monitored = rec.train_ua;
    if (!result.validation_ids.empty()) {
      std::vector<int> vp, vt;
      for (const auto& p : predict_utterances(model, data, result.validation_ids,
                                              config.batch_size)) {
        vp.push_back(p.prediction.label);
        vt.push_back(p.truth);
      }
      const MetricsReport val = compute_metrics(vp, vt);
      rec.val_wa = val.wa;
      rec.val_ua = val.ua;
      monitored = val.ua;
    } else {
      rec.val_wa = rec.val_ua = std::numeric_limits<double>::quiet_NaN();
    }

    if (stopper.observe(monitored)) result.checkpoint = model.to_checkpoint();
    result.history.best_epoch = stopper.best_epoch();
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (config.stop_at_train_accuracy && rec.train_wa >= *config.stop_at_train_accuracy) {
      result.history.stop_reason = "train accuracy target";
      break;
    }
    if (stopper.should_stop()) {
      result.history.stop_reason = "early stopping";
      break;
    }
    if (epoch == config.max_epochs) result.history.stop_reason = "max epochs";
  }
  result.mfcc_calls = model.mfcc_calls();
  result.spectrogram_calls = model.spectrogram_calls();
  return result;
}

}  // namespace coattn
