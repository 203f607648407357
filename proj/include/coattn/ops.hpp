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
#include <span>
#include <vector>

#include "coattn/rng.hpp"
#include "coattn/tensor.hpp"

// Differentiable operations. Every op validates shapes (throwing ShapeError
// with both operand shapes) and records its backward rule when any input
// requires a gradient.
namespace coattn::ad {

// a: M x K, b: K x N -> M x N.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// x: N x in, weight: in x out, bias: out (may be undefined) -> N x out.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

// Sum of all elements, shape [1].
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

// Inverted dropout. Identity (the same tensor) when !train or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, Rng& rng);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> inputs, std::size_t axis);

// Joins equally shaped tensors along a new axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> inputs, std::size_t axis);

// Picks `index` along `axis`, dropping that axis.
template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t axis, std::size_t index);

// Elements [begin, end) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin,
                std::size_t end);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// weights: B x T, rows: B x T x D -> B x D, out[b] = sum_t w[b,t] rows[b,t].
// The unbatched form takes weights 1 x T and rows T x D and returns 1 x D.
template <typename T>
Tensor<T> row_weighted_sum(const Tensor<T>& weights, const Tensor<T>& rows);

// Arithmetic mean along `axis`, dropping that axis.
template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// x: N x Cin x H x W, weight: Cout x Cin x kh x kw, bias: Cout (may be
// undefined).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, Conv2dOptions options = {});

// Floor-mode max pooling, no padding.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kernel,
                     std::size_t stride);

// N x C x H x W -> N x C.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// One LSTM step over a packed state [h | c].
//   input_proj: B x 4H, the input contribution W x + b, gate order i, f, g, o
//   state:      B x 2H
//   recurrent:  H x 4H
// Returns the next packed state, B x 2H.
template <typename T>
Tensor<T> lstm_cell(const Tensor<T>& input_proj, const Tensor<T>& state,
                    const Tensor<T>& recurrent);

// Mean over the batch of -log softmax(logits)[label]; logits: B x C.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace coattn::ad
