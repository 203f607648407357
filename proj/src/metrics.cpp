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

#include "coattn/metrics.hpp"

#include <stdexcept>
#include <string>

namespace coattn {

MetricsReport metrics_from_confusion(const ConfusionMatrix& confusion) {
  MetricsReport r;
  r.confusion = confusion;
  std::size_t correct = 0;
  double recall_sum = 0.0;
  std::size_t supported = 0;
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    std::size_t support = 0;
    for (std::size_t p = 0; p < kNumClasses; ++p) support += confusion[t][p];
    r.total += support;
    correct += confusion[t][t];
    if (support == 0) {
      r.unsupported.push_back(static_cast<int>(t));
      continue;
    }
    for (std::size_t p = 0; p < kNumClasses; ++p) {
      r.normalized[t][p] =
          static_cast<double>(confusion[t][p]) / static_cast<double>(support);
    }
    recall_sum += r.normalized[t][t];
    ++supported;
  }
  if (r.total == 0) throw std::invalid_argument("metrics of an empty confusion matrix");
  r.wa = static_cast<double>(correct) / static_cast<double>(r.total);
  r.ua = recall_sum / static_cast<double>(supported);
  return r;
}

MetricsReport compute_metrics(std::span<const int> predictions,
                              std::span<const int> truths) {
  if (predictions.size() != truths.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(predictions.size()) +
                                " predictions vs " + std::to_string(truths.size()) +
                                " truths");
  }
  if (truths.empty()) throw std::invalid_argument("metrics: empty input");
  ConfusionMatrix confusion{};
  for (std::size_t i = 0; i < truths.size(); ++i) {
    for (int label : {truths[i], predictions[i]}) {
      if (label < 0 || static_cast<std::size_t>(label) >= kNumClasses) {
        throw std::out_of_range("metrics: label out of range: " + std::to_string(label));
      }
    }
    ++confusion[static_cast<std::size_t>(truths[i])][static_cast<std::size_t>(predictions[i])];
  }
  return metrics_from_confusion(confusion);
}

}  // namespace coattn
