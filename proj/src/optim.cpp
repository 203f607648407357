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

#include "coattn/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace coattn::ad {

template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad,
                  MomentState<T>& moments, const AdamWOptions& options,
                  std::int64_t step) {
  if (!grad.empty() && grad.size() != param.size()) {
    throw ShapeError("adamw: gradient has " + std::to_string(grad.size()) +
                     " values for a parameter of " +
                     std::to_string(param.size()));
  }
  if (!(options.lr > 0.0)) throw std::invalid_argument("adamw: lr must be > 0");
  if (step < 1) throw std::invalid_argument("adamw: step must be >= 1");
  if (moments.m.size() != param.size()) {
    moments.m.assign(param.size(), T(0));
    moments.v.assign(param.size(), T(0));
  }
  const double b1 = options.beta1;
  const double b2 = options.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step));
  const T decay = T(1.0 - options.lr * options.weight_decay);
  const T step_size = T(options.lr / bias1);
  const T inv_sqrt_bias2 = T(1.0 / std::sqrt(bias2));
  const T eps = T(options.eps);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad.empty() ? T(0) : grad[i];
    T& m = moments.m[i];
    T& v = moments.v[i];
    m = T(b1) * m + T(1 - b1) * g;
    v = T(b2) * v + T(1 - b2) * g * g;
    param[i] *= decay;
    param[i] -= step_size * m / (std::sqrt(v) * inv_sqrt_bias2 + eps);
  }
}

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, AdamWOptions options)
    : params_(std::move(params)), moments_(params_.size()), options_(options) {
  if (!(options_.lr > 0.0)) throw std::invalid_argument("adamw: lr must be > 0");
}

template <typename T>
void AdamW<T>::step() {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adamw_update<T>(params_[i].mutable_data(), params_[i].grad(), moments_[i],
                    options_, step_);
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template void adamw_update(std::span<float>, std::span<const float>,
                           MomentState<float>&, const AdamWOptions&,
                           std::int64_t);
template void adamw_update(std::span<double>, std::span<const double>,
                           MomentState<double>&, const AdamWOptions&,
                           std::int64_t);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace coattn::ad
