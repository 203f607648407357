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

#include <cstdint>
#include <span>
#include <vector>

#include "coattn/tensor.hpp"

namespace coattn::ad {

struct AdamWOptions {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// First/second moments of one parameter.
template <typename T>
struct MomentState {
  std::vector<T> m;
  std::vector<T> v;
};

// One decoupled-weight-decay Adam update of `param` in place. `step` is the
// 1-based index of this update (used for bias correction).
template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad,
                  MomentState<T>& moments, const AdamWOptions& options,
                  std::int64_t step);

template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, AdamWOptions options);

  // Applies one update using the gradients accumulated on each parameter.
  // Parameters without a gradient are treated as having a zero gradient.
  void step();
  void zero_grad();

  std::int64_t step_count() const { return step_; }
  const AdamWOptions& options() const { return options_; }
  const std::vector<MomentState<T>>& moments() const { return moments_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<MomentState<T>> moments_;
  AdamWOptions options_;
  std::int64_t step_ = 0;
};

}  // namespace coattn::ad
