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
#include <cstddef>
#include <span>
#include <vector>

#include "coattn/fusion.hpp"

namespace coattn {

// confusion[truth][prediction]
using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

struct MetricsReport {
  double wa = 0.0;  // trace / total
  double ua = 0.0;  // mean recall over classes with support
  ConfusionMatrix confusion{};
  // Rows divided by their support; all-zero for unsupported classes.
  std::array<std::array<double, kNumClasses>, kNumClasses> normalized{};
  std::size_t total = 0;
  // Classes absent from the truths, left out of the UA mean.
  std::vector<int> unsupported;
};

// Throws std::invalid_argument on empty or unequal inputs and
// std::out_of_range on labels outside [0, kNumClasses).
MetricsReport compute_metrics(std::span<const int> predictions,
                              std::span<const int> truths);
MetricsReport metrics_from_confusion(const ConfusionMatrix& confusion);

}  // namespace coattn
