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

// Compute kernels behind the autodiff ops. The top-level namespace holds the
// blocked, OpenMP-parallel implementations used for training; `reference`
// holds straightforward serial loops that the tests and the benchmark compare
// against. Parallel loops only ever partition output elements, so results do
// not depend on the thread count.

#include <cstddef>

namespace coattn::kernels {

enum class Trans { kNo, kYes };

// C = alpha * op(A) * op(B) + beta * C, all row-major.
// op(A) is m x k, op(B) is k x n, C is m x n.
template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n,
          std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T beta, T* c, std::size_t ldc);

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel_w) / stride + 1; }
  std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
};

// Unfold one C x H x W image into (C*kh*kw) x (out_h*out_w) columns.
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* columns);

// Inverse scatter of im2col; accumulates into `image`.
template <typename T>
void col2im(const ConvGeometry& g, const T* columns, T* image);

// x: N x Cin x H x W, w: Cout x Cin x kh x kw, bias: Cout (nullable),
// y: N x Cout x Ho x Wo.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w,
                    const T* bias, T* y);

// Accumulates into every non-null gradient buffer.
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w,
                     const T* dy, T* dx, T* dw, T* dbias);

namespace reference {

template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n,
          std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T beta, T* c, std::size_t ldc);

// Direct nested-loop convolution.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w,
                    const T* bias, T* y);

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w,
                     const T* dy, T* dx, T* dw, T* dbias);

}  // namespace reference
}  // namespace coattn::kernels
