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

// Central finite-difference checks and random-tensor helpers for tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "coattn/ops.hpp"
#include "coattn/rng.hpp"
#include "coattn/tensor.hpp"

namespace coattn::testing {

using TensorD = ad::Tensor<double>;

inline TensorD random_tensor(ad::Shape shape, Rng& rng, bool requires_grad = true,
                             double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return TensorD::from(std::move(shape), std::move(v), requires_grad);
}

// Scalar probe sum(y * r) with a fixed random r, so that every output element
// contributes with its own weight.
inline TensorD probe(const TensorD& y, Rng& rng) {
  const TensorD r = random_tensor(y.shape(), rng, false);
  return ad::sum(ad::mul(y, r));
}

// Largest norm-wise relative error ||analytic - numeric|| / max(||analytic||,
// ||numeric||, 1e-8) over the given tensors. `loss` must rebuild the graph
// from the current tensor values on every call.
inline double gradient_error(std::vector<TensorD> params,
                             const std::function<TensorD()>& loss, double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  ad::backward(loss());
  double worst = 0.0;
  for (auto& p : params) {
    std::vector<double> analytic(p.numel(), 0.0);
    if (!p.grad().empty()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    std::vector<double> numeric(p.numel());
    {
      const ad::NoGradGuard no_grad;
      auto values = p.mutable_data();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double orig = values[i];
        values[i] = orig + h;
        const double up = loss().item();
        values[i] = orig - h;
        const double down = loss().item();
        values[i] = orig;
        numeric[i] = (up - down) / (2.0 * h);
      }
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
    worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

}  // namespace coattn::testing
