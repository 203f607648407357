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

#include "coattn/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coattn {

std::string_view emotion_name(int label) {
  static constexpr std::string_view kNames[] = {"angry", "sad", "happy", "neutral"};
  if (label < 0 || static_cast<std::size_t>(label) >= kNumClasses) {
    throw std::out_of_range("emotion label out of range: " + std::to_string(label));
  }
  return kNames[label];
}

int argmax_label(std::span<const double> probabilities) {
  if (probabilities.empty()) throw std::invalid_argument("argmax of empty vector");
  // max_element returns the first maximum, which is the tie-break we want.
  return static_cast<int>(std::max_element(probabilities.begin(), probabilities.end()) -
                          probabilities.begin());
}

Prediction make_prediction(std::span<const double> logits) {
  if (logits.size() != kNumClasses) {
    throw ad::ShapeError("prediction expects " + std::to_string(kNumClasses) +
                         " logits, got " + std::to_string(logits.size()));
  }
  Prediction p;
  std::copy(logits.begin(), logits.end(), p.logits.begin());
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p.probabilities[c] = std::exp(logits[c] - peak);
    total += p.probabilities[c];
  }
  for (double& v : p.probabilities) v /= total;
  p.label = argmax_label(p.probabilities);
  return p;
}

}  // namespace coattn

namespace coattn::model {

std::size_t ModelConfig::attention_in_dim() const {
  if (!attends()) return 0;
  return (attend_mfcc ? mfcc.out_dim : 0) +
         (attend_spectrogram ? spectrogram.out_dim : 0);
}

std::size_t ModelConfig::fused_dim() const {
  return (use_mfcc ? mfcc.out_dim : 0) +
         (use_spectrogram ? spectrogram.out_dim : 0) +
         (use_embedding ? embedding_dim : 0);
}

void ModelConfig::validate() const {
  if (!use_mfcc && !use_spectrogram && !use_embedding) {
    throw std::invalid_argument("model config: every branch is disabled");
  }
  if (use_embedding && coattention && !attend_mfcc && !attend_spectrogram) {
    throw std::invalid_argument(
        "model config: attention pooling needs at least one source branch");
  }
  if (use_embedding && (embedding_frames == 0 || embedding_dim == 0)) {
    throw std::invalid_argument("model config: empty embedding shape");
  }
}

template <typename T>
Tensor<T> coattention_weights(const Tensor<T>& x_mfcc, const Tensor<T>& x_spec,
                              const Linear<T>& f_att, AttentionMode mode) {
  std::vector<Tensor<T>> parts;
  for (const Tensor<T>* x : {&x_mfcc, &x_spec}) {
    if (!x->defined()) continue;
    if (x->rank() != 2) {
      throw ad::ShapeError("coattention_weights: features must be B x D, got " +
                           ad::to_string(x->shape()));
    }
    parts.push_back(*x);
  }
  if (parts.empty()) {
    throw std::invalid_argument("coattention_weights: no source features");
  }
  const Tensor<T> joint =
      parts.size() == 1 ? parts.front() : ad::concat<T>(parts, 1);
  if (joint.dim(1) != f_att.in_features()) {
    throw ad::ShapeError("coattention_weights: source width " +
                         std::to_string(joint.dim(1)) + " != configured " +
                         std::to_string(f_att.in_features()));
  }
  Tensor<T> logits = f_att(joint);
  return mode == AttentionMode::kSoftmax ? ad::softmax(logits, 1) : logits;
}

template <typename T>
Tensor<T> pool_embeddings(const Tensor<T>& weights, const Tensor<T>& embeddings) {
  if (weights.rank() != 2 || embeddings.rank() != 3 ||
      weights.dim(0) != embeddings.dim(0) || weights.dim(1) != embeddings.dim(1)) {
    throw ad::ShapeError("pool_embeddings: weights " + ad::to_string(weights.shape()) +
                         " do not match embeddings " +
                         ad::to_string(embeddings.shape()));
  }
  return ad::row_weighted_sum(weights, embeddings);
}

template <typename T>
Tensor<T> mean_pool_embeddings(const Tensor<T>& embeddings) {
  if (embeddings.rank() != 3) {
    throw ad::ShapeError("mean_pool_embeddings: expected B x T x D, got " +
                         ad::to_string(embeddings.shape()));
  }
  return ad::mean(embeddings, 1);
}

template <typename T>
Tensor<T> fuse(const Tensor<T>& x_mfcc, const Tensor<T>& x_spec,
               const Tensor<T>& x_pooled) {
  std::vector<Tensor<T>> parts;
  for (const Tensor<T>* x : {&x_mfcc, &x_spec, &x_pooled}) {
    if (x->defined()) parts.push_back(*x);
  }
  if (parts.empty()) throw std::invalid_argument("fuse: nothing to concatenate");
  return parts.size() == 1 ? parts.front() : ad::concat<T>(parts, 1);
}

template <typename T>
Tensor<T> classify(const Tensor<T>& fused, const Linear<T>& f) {
  if (fused.rank() != 2 || fused.dim(1) != f.in_features()) {
    throw ad::ShapeError("classify: fused vector " + ad::to_string(fused.shape()) +
                         " does not match classifier input " +
                         std::to_string(f.in_features()));
  }
  return f(fused);
}

template <typename T>
CoAttentionModel<T>::CoAttentionModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), counters_(std::make_unique<Counters>()) {
  config_.validate();
  Rng root(seed);
  // Every component draws from its own stream so that disabling one branch
  // leaves the initial values of the others unchanged.
  Rng mfcc_rng = root.fork();
  Rng spec_rng = root.fork();
  Rng att_rng = root.fork();
  Rng cls_rng = root.fork();
  if (config_.needs_mfcc()) mfcc_.emplace(config_.mfcc, mfcc_rng);
  if (config_.needs_spectrogram()) spectrogram_.emplace(config_.spectrogram, spec_rng);
  if (config_.attends()) {
    attention_ = make_linear<T>(config_.attention_in_dim(), config_.embedding_frames,
                                att_rng);
  }
  classifier_ = make_linear<T>(config_.fused_dim(), kNumClasses, cls_rng);
}

template <typename T>
ForwardResult<T> CoAttentionModel<T>::forward(const Batch<T>& batch, bool train,
                                              Rng& dropout) const {
  auto require = [](const Tensor<T>& t, const char* what) {
    if (!t.defined()) {
      throw std::invalid_argument(std::string("model forward: missing ") + what +
                                  " input");
    }
  };
  Tensor<T> x_m, x_s;
  if (mfcc_) {
    require(batch.mfcc, "mfcc");
    x_m = mfcc_->forward(batch.mfcc, train, dropout);
    ++counters_->mfcc;
  }
  if (spectrogram_) {
    require(batch.spectrogram, "spectrogram");
    x_s = spectrogram_->forward(batch.spectrogram, train, dropout);
    ++counters_->spectrogram;
  }

  ForwardResult<T> out;
  if (config_.use_embedding) {
    require(batch.embedding, "embedding");
    const Tensor<T>& emb = batch.embedding;
    if (emb.rank() != 3 || emb.dim(1) != config_.embedding_frames ||
        emb.dim(2) != config_.embedding_dim) {
      throw ad::ShapeError("model forward: embedding " + ad::to_string(emb.shape()) +
                           " does not match configured " +
                           std::to_string(config_.embedding_frames) + " x " +
                           std::to_string(config_.embedding_dim));
    }
    if (attention_) {
      out.weights = coattention_weights(config_.attend_mfcc ? x_m : Tensor<T>(),
                                        config_.attend_spectrogram ? x_s : Tensor<T>(),
                                        *attention_, config_.attention);
      out.pooled = pool_embeddings(out.weights, emb);
    } else {
      out.pooled = mean_pool_embeddings(emb);
    }
  }
  out.fused = fuse(config_.use_mfcc ? x_m : Tensor<T>(),
                   config_.use_spectrogram ? x_s : Tensor<T>(), out.pooled);
  out.logits = classify(out.fused, classifier_);
  return out;
}

template <typename T>
NamedParameters<T> CoAttentionModel<T>::named_parameters() const {
  NamedParameters<T> out;
  if (mfcc_) mfcc_->collect("mfcc.", out);
  if (spectrogram_) spectrogram_->collect("spectrogram.", out);
  if (attention_) {
    out.emplace_back("attention.weight", attention_->weight);
    out.emplace_back("attention.bias", attention_->bias);
  }
  out.emplace_back("classifier.weight", classifier_.weight);
  out.emplace_back("classifier.bias", classifier_.bias);
  return out;
}

template <typename T>
std::vector<Tensor<T>> CoAttentionModel<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, tensor] : named_parameters()) out.push_back(tensor);
  return out;
}

template <typename T>
Checkpoint CoAttentionModel<T>::to_checkpoint() const {
  Checkpoint ckpt;
  for (const auto& [name, tensor] : named_parameters()) {
    CheckpointEntry e;
    e.name = name;
    for (std::size_t d : tensor.shape()) e.dims.push_back(static_cast<std::uint32_t>(d));
    e.data.assign(tensor.data().begin(), tensor.data().end());
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

template <typename T>
void CoAttentionModel<T>::load(const Checkpoint& ckpt) {
  const auto params = named_parameters();
  if (ckpt.entries.size() != params.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(ckpt.entries.size()) +
                             " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto [name, tensor] : params) {
    const CheckpointEntry* e = ckpt.find(name);
    if (e == nullptr) throw std::runtime_error("checkpoint lacks tensor " + name);
    const bool same_shape =
        e->dims.size() == tensor.rank() &&
        std::equal(e->dims.begin(), e->dims.end(), tensor.shape().begin(),
                   [](std::uint32_t a, std::size_t b) { return a == b; });
    if (!same_shape) {
      throw std::runtime_error("checkpoint tensor " + name + " has the wrong shape");
    }
    std::copy(e->data.begin(), e->data.end(), tensor.mutable_data().begin());
  }
}

std::vector<AblationRow> ablation_grid(const ModelConfig& base) {
  auto make = [&](std::string name, bool m, bool s, bool w, bool att, bool att_m,
                  bool att_s) {
    ModelConfig c = base;
    c.use_mfcc = m;
    c.use_spectrogram = s;
    c.use_embedding = w;
    c.coattention = att;
    c.attend_mfcc = att_m;
    c.attend_spectrogram = att_s;
    return AblationRow{std::move(name), c};
  };
  return {
      make("MFCC", true, false, false, false, false, false),
      make("Spectrogram", false, true, false, false, false, false),
      make("W2E", false, false, true, false, false, false),
      make("MFCC+W2E (w/o co-att)", true, false, true, false, false, false),
      make("Spectrogram+W2E (w/o co-att)", false, true, true, false, false, false),
      make("MFCC+Spectrogram+W2E (w/o co-att)", true, true, true, false, false, false),
      // Attention only: both other branches drive the weights but are not
      // concatenated.
      make("W2E (w/ co-att)", false, false, true, true, true, true),
      make("MFCC+W2E (w/ co-att)", true, false, true, true, true, false),
      make("Spectrogram+W2E (w/ co-att)", false, true, true, true, false, true),
      make("MFCC+Spectrogram+W2E (w/ co-att)", true, true, true, true, true, true),
  };
}

#define COATTN_INSTANTIATE(T)                                                    \
  template Tensor<T> coattention_weights(const Tensor<T>&, const Tensor<T>&,     \
                                         const Linear<T>&, AttentionMode);       \
  template Tensor<T> pool_embeddings(const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> mean_pool_embeddings(const Tensor<T>&);                     \
  template Tensor<T> fuse(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> classify(const Tensor<T>&, const Linear<T>&);               \
  template class CoAttentionModel<T>;

COATTN_INSTANTIATE(float)
COATTN_INSTANTIATE(double)
#undef COATTN_INSTANTIATE

}  // namespace coattn::model
