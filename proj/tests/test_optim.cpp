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

#include <cmath>
#include <vector>

#include "coattn/optim.hpp"
#include "doctest.h"

using namespace coattn;

TEST_SUITE("optim") {
  TEST_CASE("zero gradient without decay leaves parameters unchanged") {
    auto p = ad::Tensor<double>::from({3}, {1.0, -2.0, 0.5}, true);
    ad::AdamW<double> opt({p}, {.lr = 0.1, .weight_decay = 0.0});
    for (int i = 0; i < 5; ++i) {
      auto g = p.mutable_grad();
      std::fill(g.begin(), g.end(), 0.0);
      opt.step();
    }
    CHECK(std::vector<double>(p.data().begin(), p.data().end()) ==
          std::vector<double>{1.0, -2.0, 0.5});
    CHECK(opt.step_count() == 5);
  }

  TEST_CASE("first step moves each weight by lr against the gradient sign") {
    std::vector<double> param{1.0, 1.0, 1.0};
    const std::vector<double> grad{0.3, -4.0, 1e-3};
    ad::MomentState<double> st;
    ad::adamw_update<double>(param, grad, st, {.lr = 0.01, .weight_decay = 0.0}, 1);
    for (std::size_t i = 0; i < 3; ++i) {
      const double expected = 1.0 - 0.01 * grad[i] / (std::abs(grad[i]) + 1e-8);
      CHECK(param[i] == doctest::Approx(expected).epsilon(1e-12));
    }
  }

  TEST_CASE("second step matches a hand-rolled update") {
    std::vector<double> param{0.7};
    ad::MomentState<double> st;
    const ad::AdamWOptions o{.lr = 0.05, .weight_decay = 0.2};
    ad::adamw_update<double>(param, std::vector<double>{0.4}, st, o, 1);
    ad::adamw_update<double>(param, std::vector<double>{-0.1}, st, o, 2);

    double theta = 0.7, m = 0.0, v = 0.0;
    const double gs[] = {0.4, -0.1};
    for (int t = 1; t <= 2; ++t) {
      const double g = gs[t - 1];
      theta *= 1.0 - o.lr * o.weight_decay;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1.0 - std::pow(0.9, t));
      const double vh = v / (1.0 - std::pow(0.999, t));
      theta -= o.lr * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(param[0] == doctest::Approx(theta).epsilon(1e-12));
  }

  TEST_CASE("minimises a quadratic") {
    auto p = ad::Tensor<double>::from({1}, {1.0}, true);
    ad::AdamW<double> opt({p}, {.lr = 0.1, .weight_decay = 0.0});
    for (int i = 0; i < 200; ++i) {
      opt.zero_grad();
      p.mutable_grad()[0] = 2.0 * p.data()[0];
      opt.step();
    }
    CHECK(std::abs(p.data()[0]) < 0.01);
  }

  TEST_CASE("decoupled decay shrinks by lr * wd with zero gradient") {
    auto p = ad::Tensor<float>::from({2}, {2.0f, -1.0f}, true);
    ad::AdamW<float> opt({p}, {.lr = 0.01, .weight_decay = 0.1});
    opt.step();
    CHECK(p.data()[0] == doctest::Approx(2.0 * 0.999).epsilon(1e-6));
    CHECK(p.data()[1] == doctest::Approx(-0.999).epsilon(1e-6));
  }
}
