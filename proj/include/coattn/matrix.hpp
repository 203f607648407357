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

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace coattn {

// Dense row-major matrix used for feature grids and embedding sequences.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0))
      : rows(r), cols(c), values(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) {
    assert(r < rows && c < cols);
    return values[r * cols + c];
  }
  const T& operator()(std::size_t r, std::size_t c) const {
    assert(r < rows && c < cols);
    return values[r * cols + c];
  }

  std::span<T> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }

  bool operator==(const Matrix&) const = default;
};

template <typename To, typename From>
Matrix<To> matrix_cast(const Matrix<From>& m) {
  Matrix<To> out;
  out.rows = m.rows;
  out.cols = m.cols;
  out.values.assign(m.values.begin(), m.values.end());
  return out;
}

}  // namespace coattn
