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

#include "coattn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "coattn/kernels.hpp"

namespace coattn::ad {
namespace {

using kernels::Trans;

[[noreturn]] void shape_mismatch(const char* op, const Shape& a,
                                 const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) +
                   " and " + to_string(b));
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + to_string(s));
  }
}

void require_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + to_string(s));
  }
}

// Splits a shape around `axis` into (outer, axis length, inner).
struct AxisView {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

template <typename T>
void accumulate(Node<T>& parent, const std::vector<T>& g) {
  if (!parent.requires_grad) return;
  T* dst = parent.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", a.shape(), 2);
  require_rank("matmul", b.shape(), 2);
  if (a.dim(1) != b.dim(0)) shape_mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  kernels::gemm(Trans::kNo, Trans::kNo, m, n, k, T(1), a.data().data(), k,
                b.data().data(), n, T(0), out.data(), n);
  return make_result<T>("matmul", {m, n}, std::move(out), {a, b},
                        [m, k, n](Node<T>& self) {
                          Node<T>& pa = *self.parents[0];
                          Node<T>& pb = *self.parents[1];
                          if (pa.requires_grad) {
                            kernels::gemm(Trans::kNo, Trans::kYes, m, k, n,
                                          T(1), self.grad.data(), n,
                                          pb.value.data(), n, T(1),
                                          pa.grad_buffer(), k);
                          }
                          if (pb.requires_grad) {
                            kernels::gemm(Trans::kYes, Trans::kNo, k, n, m,
                                          T(1), pa.value.data(), k,
                                          self.grad.data(), n, T(1),
                                          pb.grad_buffer(), n);
                          }
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  require_rank("linear", x.shape(), 2);
  require_rank("linear", weight.shape(), 2);
  if (x.dim(1) != weight.dim(0)) {
    shape_mismatch("linear", x.shape(), weight.shape());
  }
  const std::size_t m = x.dim(0), k = x.dim(1), n = weight.dim(1);
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != n) {
    shape_mismatch("linear", weight.shape(), bias.shape());
  }
  std::vector<T> out(m * n);
  if (has_bias) {
    for (std::size_t i = 0; i < m; ++i) {
      std::copy(bias.data().begin(), bias.data().end(), out.begin() + i * n);
    }
  }
  kernels::gemm(Trans::kNo, Trans::kNo, m, n, k, T(1), x.data().data(), k,
                weight.data().data(), n, has_bias ? T(1) : T(0), out.data(),
                n);
  std::vector<Tensor<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(
      "linear", {m, n}, std::move(out), std::move(inputs),
      [m, k, n](Node<T>& self) {
        Node<T>& px = *self.parents[0];
        Node<T>& pw = *self.parents[1];
        const T* dy = self.grad.data();
        if (px.requires_grad) {
          kernels::gemm(Trans::kNo, Trans::kYes, m, k, n, T(1), dy, n,
                        pw.value.data(), n, T(1), px.grad_buffer(), k);
        }
        if (pw.requires_grad) {
          kernels::gemm(Trans::kYes, Trans::kNo, k, n, m, T(1),
                        px.value.data(), k, dy, n, T(1), pw.grad_buffer(), n);
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          T* db = self.parents[2]->grad_buffer();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) db[j] += dy[i * n + j];
          }
        }
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("add", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>("add", a.shape(), std::move(out), {a, b},
                        [](Node<T>& self) {
                          accumulate(*self.parents[0], self.grad);
                          accumulate(*self.parents[1], self.grad);
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("mul", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>("mul", a.shape(), std::move(out), {a, b},
                        [](Node<T>& self) {
                          Node<T>& pa = *self.parents[0];
                          Node<T>& pb = *self.parents[1];
                          const std::size_t n = self.grad.size();
                          if (pa.requires_grad) {
                            T* g = pa.grad_buffer();
                            for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * pb.value[i];
                          }
                          if (pb.requires_grad) {
                            T* g = pb.grad_buffer();
                            for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * pa.value[i];
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return make_result<T>("scale", x.shape(), std::move(out), {x},
                        [factor](Node<T>& self) {
                          T* g = self.parents[0]->grad_buffer();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  return make_result<T>("sum", {1}, {total}, {x}, [](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    T* g = p.grad_buffer();
    for (std::size_t i = 0; i < p.value.size(); ++i) g[i] += self.grad[0];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(x.data()[i], T(0));
  return make_result<T>("relu", x.shape(), std::move(out), {x},
                        [](Node<T>& self) {
                          Node<T>& p = *self.parents[0];
                          T* g = p.grad_buffer();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            if (p.value[i] > T(0)) g[i] += self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  require_axis("softmax", x.shape(), axis);
  const AxisView v = axis_view(x.shape(), axis);
  std::vector<T> out(x.numel());
  const T* in = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.len * v.inner + i;
      T peak = -std::numeric_limits<T>::infinity();
      for (std::size_t t = 0; t < v.len; ++t) peak = std::max(peak, in[base + t * v.inner]);
      T total = T(0);
      for (std::size_t t = 0; t < v.len; ++t) {
        const T e = std::exp(in[base + t * v.inner] - peak);
        out[base + t * v.inner] = e;
        total += e;
      }
      for (std::size_t t = 0; t < v.len; ++t) out[base + t * v.inner] /= total;
    }
  }
  return make_result<T>(
      "softmax", x.shape(), std::move(out), {x}, [v](Node<T>& self) {
        T* g = self.parents[0]->grad_buffer();
        const T* y = self.value.data();
        const T* dy = self.grad.data();
        for (std::size_t o = 0; o < v.outer; ++o) {
          for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.len * v.inner + i;
            T dot = T(0);
            for (std::size_t t = 0; t < v.len; ++t) {
              dot += dy[base + t * v.inner] * y[base + t * v.inner];
            }
            for (std::size_t t = 0; t < v.len; ++t) {
              const std::size_t idx = base + t * v.inner;
              g[idx] += y[idx] * (dy[idx] - dot);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw std::invalid_argument("dropout: probability must be in [0, 1), got " +
                                std::to_string(p));
  }
  if (!train || p == 0.0) return x;
  const T keep_scale = T(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < p ? T(0) : keep_scale;
    out[i] = x.data()[i] * mask[i];
  }
  return make_result<T>("dropout", x.shape(), std::move(out), {x},
                        [mask = std::move(mask)](Node<T>& self) {
                          T* g = self.parents[0]->grad_buffer();
                          for (std::size_t i = 0; i < mask.size(); ++i) g[i] += self.grad[i] * mask[i];
                        });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> inputs, std::size_t axis) {
  if (inputs.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = inputs[0].shape();
  require_axis("concat", first, axis);
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& in : inputs) {
    const Shape& s = in.shape();
    if (s.size() != first.size()) shape_mismatch("concat", first, s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) shape_mismatch("concat", first, s);
    }
    lens.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const AxisView v = axis_view(out_shape, axis);
  std::vector<T> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const T* src = inputs[k].data().data();
    const std::size_t chunk = lens[k] * v.inner;
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy(src + o * chunk, src + (o + 1) * chunk,
                out.begin() + o * v.len * v.inner + offset * v.inner);
    }
    offset += lens[k];
  }
  std::vector<Tensor<T>> parents(inputs.begin(), inputs.end());
  return make_result<T>(
      "concat", out_shape, std::move(out), std::move(parents),
      [v, lens](Node<T>& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < lens.size(); ++k) {
          Node<T>& p = *self.parents[k];
          const std::size_t chunk = lens[k] * v.inner;
          if (p.requires_grad) {
            T* g = p.grad_buffer();
            for (std::size_t o = 0; o < v.outer; ++o) {
              const T* src = self.grad.data() + o * v.len * v.inner + offset * v.inner;
              for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += src[i];
            }
          }
          offset += lens[k];
        }
      });
}

template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> inputs, std::size_t axis) {
  if (inputs.empty()) throw ShapeError("stack: no inputs");
  const Shape& first = inputs[0].shape();
  if (axis > first.size()) {
    throw ShapeError("stack: axis " + std::to_string(axis) +
                     " out of range for " + to_string(first));
  }
  std::vector<Tensor<T>> expanded;
  expanded.reserve(inputs.size());
  Shape unit = first;
  unit.insert(unit.begin() + static_cast<std::ptrdiff_t>(axis), 1);
  for (const auto& in : inputs) {
    if (in.shape() != first) shape_mismatch("stack", first, in.shape());
    expanded.push_back(reshape(in, unit));
  }
  return concat<T>(expanded, axis);
}

template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t axis, std::size_t index) {
  require_axis("select", x.shape(), axis);
  if (index >= x.dim(axis)) {
    throw ShapeError("select: index " + std::to_string(index) +
                     " out of range for axis " + std::to_string(axis) +
                     " of " + to_string(x.shape()));
  }
  const AxisView v = axis_view(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<T> out(v.outer * v.inner);
  const T* src = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy(src + (o * v.len + index) * v.inner,
              src + (o * v.len + index + 1) * v.inner,
              out.begin() + o * v.inner);
  }
  return make_result<T>("select", std::move(out_shape), std::move(out), {x},
                        [v, index](Node<T>& self) {
                          T* g = self.parents[0]->grad_buffer();
                          for (std::size_t o = 0; o < v.outer; ++o) {
                            T* dst = g + (o * v.len + index) * v.inner;
                            const T* src = self.grad.data() + o * v.inner;
                            for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
                          }
                        });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin,
                std::size_t end) {
  require_axis("slice", x.shape(), axis);
  if (begin >= end || end > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for axis " +
                     std::to_string(axis) + " of " + to_string(x.shape()));
  }
  const AxisView v = axis_view(x.shape(), axis);
  const std::size_t width = end - begin;
  Shape out_shape = x.shape();
  out_shape[axis] = width;
  std::vector<T> out(v.outer * width * v.inner);
  const T* src = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy(src + (o * v.len + begin) * v.inner,
              src + (o * v.len + end) * v.inner,
              out.begin() + o * width * v.inner);
  }
  return make_result<T>("slice", std::move(out_shape), std::move(out), {x},
                        [v, begin, width](Node<T>& self) {
                          T* g = self.parents[0]->grad_buffer();
                          const std::size_t chunk = width * v.inner;
                          for (std::size_t o = 0; o < v.outer; ++o) {
                            T* dst = g + (o * v.len + begin) * v.inner;
                            const T* src = self.grad.data() + o * chunk;
                            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) shape_mismatch("reshape", x.shape(), shape);
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {x},
                        [](Node<T>& self) { accumulate(*self.parents[0], self.grad); });
}

template <typename T>
Tensor<T> row_weighted_sum(const Tensor<T>& weights, const Tensor<T>& rows) {
  std::size_t batch = 0, frames = 0, width = 0;
  Shape out_shape;
  if (rows.rank() == 2) {
    batch = 1;
    frames = rows.dim(0);
    width = rows.dim(1);
    if (weights.numel() != frames) {
      shape_mismatch("row_weighted_sum", weights.shape(), rows.shape());
    }
    out_shape = {1, width};
  } else if (rows.rank() == 3) {
    batch = rows.dim(0);
    frames = rows.dim(1);
    width = rows.dim(2);
    if (weights.rank() != 2 || weights.dim(0) != batch ||
        weights.dim(1) != frames) {
      shape_mismatch("row_weighted_sum", weights.shape(), rows.shape());
    }
    out_shape = {batch, width};
  } else {
    shape_mismatch("row_weighted_sum", weights.shape(), rows.shape());
  }
  std::vector<T> out(batch * width, T(0));
  const T* w = weights.data().data();
  const T* m = rows.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    T* dst = out.data() + b * width;
    for (std::size_t t = 0; t < frames; ++t) {
      const T wt = w[b * frames + t];
      const T* row = m + (b * frames + t) * width;
      for (std::size_t d = 0; d < width; ++d) dst[d] += wt * row[d];
    }
  }
  return make_result<T>(
      "row_weighted_sum", std::move(out_shape), std::move(out),
      {weights, rows}, [batch, frames, width](Node<T>& self) {
        Node<T>& pw = *self.parents[0];
        Node<T>& pm = *self.parents[1];
        const T* dy = self.grad.data();
        if (pw.requires_grad) {
          T* g = pw.grad_buffer();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < frames; ++t) {
              const T* row = pm.value.data() + (b * frames + t) * width;
              T dot = T(0);
              for (std::size_t d = 0; d < width; ++d) dot += dy[b * width + d] * row[d];
              g[b * frames + t] += dot;
            }
          }
        }
        if (pm.requires_grad) {
          T* g = pm.grad_buffer();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < frames; ++t) {
              const T wt = pw.value[b * frames + t];
              T* row = g + (b * frames + t) * width;
              for (std::size_t d = 0; d < width; ++d) row[d] += wt * dy[b * width + d];
            }
          }
        }
      });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis) {
  require_axis("mean", x.shape(), axis);
  const AxisView v = axis_view(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<T> out(v.outer * v.inner, T(0));
  const T inv = T(1) / static_cast<T>(v.len);
  const T* src = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t t = 0; t < v.len; ++t) {
      const T* row = src + (o * v.len + t) * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) out[o * v.inner + i] += row[i];
    }
  }
  for (T& value : out) value *= inv;
  return make_result<T>("mean", std::move(out_shape), std::move(out), {x},
                        [v, inv](Node<T>& self) {
                          T* g = self.parents[0]->grad_buffer();
                          for (std::size_t o = 0; o < v.outer; ++o) {
                            for (std::size_t t = 0; t < v.len; ++t) {
                              T* row = g + (o * v.len + t) * v.inner;
                              for (std::size_t i = 0; i < v.inner; ++i) row[i] += inv * self.grad[o * v.inner + i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, Conv2dOptions options) {
  require_rank("conv2d", x.shape(), 4);
  require_rank("conv2d", weight.shape(), 4);
  if (x.dim(1) != weight.dim(1)) shape_mismatch("conv2d", x.shape(), weight.shape());
  if (options.stride == 0) throw ShapeError("conv2d: stride must be positive");
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.in_h = x.dim(2);
  g.in_w = x.dim(3);
  g.out_channels = weight.dim(0);
  g.kernel_h = weight.dim(2);
  g.kernel_w = weight.dim(3);
  g.stride = options.stride;
  g.pad = options.pad;
  if (g.in_h + 2 * g.pad < g.kernel_h || g.in_w + 2 * g.pad < g.kernel_w) {
    shape_mismatch("conv2d", x.shape(), weight.shape());
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != g.out_channels) {
    shape_mismatch("conv2d", weight.shape(), bias.shape());
  }
  Shape out_shape{g.batch, g.out_channels, g.out_h(), g.out_w()};
  std::vector<T> out(numel(out_shape));
  kernels::conv2d_forward(g, x.data().data(), weight.data().data(),
                          has_bias ? bias.data().data() : nullptr, out.data());
  std::vector<Tensor<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(
      "conv2d", std::move(out_shape), std::move(out), std::move(inputs),
      [g](Node<T>& self) {
        Node<T>& px = *self.parents[0];
        Node<T>& pw = *self.parents[1];
        T* dbias = nullptr;
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          dbias = self.parents[2]->grad_buffer();
        }
        kernels::conv2d_backward(g, px.value.data(), pw.value.data(),
                                 self.grad.data(),
                                 px.requires_grad ? px.grad_buffer() : nullptr,
                                 pw.requires_grad ? pw.grad_buffer() : nullptr,
                                 dbias);
      });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kernel,
                     std::size_t stride) {
  require_rank("max_pool2d", x.shape(), 4);
  if (kernel == 0 || stride == 0 || x.dim(2) < kernel || x.dim(3) < kernel) {
    throw ShapeError("max_pool2d: kernel " + std::to_string(kernel) +
                     " / stride " + std::to_string(stride) +
                     " invalid for " + to_string(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  const std::size_t oh = (h - kernel) / stride + 1;
  const std::size_t ow = (w - kernel) / stride + 1;
  std::vector<T> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const T* src = x.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = p * h * w + oy * stride * w + ox * stride;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t idx = p * h * w + (oy * stride + ky) * w + ox * stride + kx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = src[best];
        argmax[o] = best;
      }
    }
  }
  return make_result<T>("max_pool2d", {x.dim(0), x.dim(1), oh, ow},
                        std::move(out), {x},
                        [argmax = std::move(argmax)](Node<T>& self) {
                          T* g = self.parents[0]->grad_buffer();
                          for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
                        });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank("global_avg_pool", x.shape(), 4);
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t plane = x.dim(2) * x.dim(3);
  const T inv = T(1) / static_cast<T>(plane);
  std::vector<T> out(n * c);
  const T* src = x.data().data();
  for (std::size_t i = 0; i < n * c; ++i) {
    T total = T(0);
    for (std::size_t s = 0; s < plane; ++s) total += src[i * plane + s];
    out[i] = total * inv;
  }
  return make_result<T>("global_avg_pool", {n, c}, std::move(out), {x},
                        [plane, inv](Node<T>& self) {
                          T* g = self.parents[0]->grad_buffer();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            const T d = self.grad[i] * inv;
                            for (std::size_t s = 0; s < plane; ++s) g[i * plane + s] += d;
                          }
                        });
}

template <typename T>
Tensor<T> lstm_cell(const Tensor<T>& input_proj, const Tensor<T>& state,
                    const Tensor<T>& recurrent) {
  require_rank("lstm_cell", input_proj.shape(), 2);
  require_rank("lstm_cell", state.shape(), 2);
  require_rank("lstm_cell", recurrent.shape(), 2);
  const std::size_t batch = state.dim(0);
  const std::size_t hidden = state.dim(1) / 2;
  if (state.dim(1) != 2 * hidden || recurrent.dim(0) != hidden ||
      recurrent.dim(1) != 4 * hidden) {
    shape_mismatch("lstm_cell", state.shape(), recurrent.shape());
  }
  if (input_proj.dim(0) != batch || input_proj.dim(1) != 4 * hidden) {
    shape_mismatch("lstm_cell", input_proj.shape(), state.shape());
  }
  const std::size_t g4 = 4 * hidden;
  // z = input_proj + h_prev * U
  std::vector<T> z(input_proj.data().begin(), input_proj.data().end());
  {
    // h_prev is the left half of each packed state row: stride 2H.
    kernels::gemm(Trans::kNo, Trans::kNo, batch, g4, hidden, T(1),
                  state.data().data(), 2 * hidden, recurrent.data().data(), g4,
                  T(1), z.data(), g4);
  }
  // Gate activations saved for backward, laid out like z.
  std::vector<T> gates(batch * g4);
  std::vector<T> tanh_c(batch * hidden);
  std::vector<T> out(batch * 2 * hidden);
  const T* s = state.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* zr = z.data() + b * g4;
    T* gr = gates.data() + b * g4;
    for (std::size_t j = 0; j < hidden; ++j) {
      const T i = sigmoid(zr[j]);
      const T f = sigmoid(zr[hidden + j]);
      const T g = std::tanh(zr[2 * hidden + j]);
      const T o = sigmoid(zr[3 * hidden + j]);
      gr[j] = i;
      gr[hidden + j] = f;
      gr[2 * hidden + j] = g;
      gr[3 * hidden + j] = o;
      const T c = f * s[b * 2 * hidden + hidden + j] + i * g;
      const T tc = std::tanh(c);
      tanh_c[b * hidden + j] = tc;
      out[b * 2 * hidden + j] = o * tc;
      out[b * 2 * hidden + hidden + j] = c;
    }
  }
  return make_result<T>(
      "lstm_cell", {batch, 2 * hidden}, std::move(out),
      {input_proj, state, recurrent},
      [batch, hidden, gates = std::move(gates),
       tanh_c = std::move(tanh_c)](Node<T>& self) {
        const std::size_t g4 = 4 * hidden;
        Node<T>& px = *self.parents[0];
        Node<T>& ps = *self.parents[1];
        Node<T>& pu = *self.parents[2];
        std::vector<T> dz(batch * g4);
        std::vector<T> dc_prev(batch * hidden);
        const T* dy = self.grad.data();
        for (std::size_t b = 0; b < batch; ++b) {
          const T* gr = gates.data() + b * g4;
          T* dzr = dz.data() + b * g4;
          for (std::size_t j = 0; j < hidden; ++j) {
            const T i = gr[j], f = gr[hidden + j], g = gr[2 * hidden + j],
                    o = gr[3 * hidden + j];
            const T tc = tanh_c[b * hidden + j];
            const T dh = dy[b * 2 * hidden + j];
            const T dc = dy[b * 2 * hidden + hidden + j] + dh * o * (T(1) - tc * tc);
            const T c_prev = ps.value[b * 2 * hidden + hidden + j];
            dzr[j] = dc * g * i * (T(1) - i);
            dzr[hidden + j] = dc * c_prev * f * (T(1) - f);
            dzr[2 * hidden + j] = dc * i * (T(1) - g * g);
            dzr[3 * hidden + j] = dh * tc * o * (T(1) - o);
            dc_prev[b * hidden + j] = dc * f;
          }
        }
        if (px.requires_grad) accumulate(px, dz);
        if (ps.requires_grad) {
          T* g = ps.grad_buffer();
          // dh_prev = dz * U^T, written into the left half of each state row.
          kernels::gemm(Trans::kNo, Trans::kYes, batch, hidden, g4, T(1),
                        dz.data(), g4, pu.value.data(), g4, T(1), g,
                        2 * hidden);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < hidden; ++j) {
              g[b * 2 * hidden + hidden + j] += dc_prev[b * hidden + j];
            }
          }
        }
        if (pu.requires_grad) {
          kernels::gemm(Trans::kYes, Trans::kNo, hidden, g4, batch, T(1),
                        ps.value.data(), 2 * hidden, dz.data(), g4, T(1),
                        pu.grad_buffer(), g4);
        }
      });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank("cross_entropy", logits.shape(), 2);
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + to_string(logits.shape()));
  }
  std::vector<T> probs(batch * classes);
  T total = T(0);
  const T* z = logits.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
    const T* row = z + b * classes;
    const T peak = *std::max_element(row, row + classes);
    T norm = T(0);
    for (std::size_t c = 0; c < classes; ++c) norm += std::exp(row[c] - peak);
    const T log_norm = std::log(norm);
    for (std::size_t c = 0; c < classes; ++c) {
      probs[b * classes + c] = std::exp(row[c] - peak - log_norm);
    }
    total += -(row[label] - peak - log_norm);
  }
  const T inv_batch = T(1) / static_cast<T>(batch);
  std::vector<int> targets(labels.begin(), labels.end());
  return make_result<T>(
      "cross_entropy", {1}, {total * inv_batch}, {logits},
      [classes, inv_batch, probs = std::move(probs),
       targets = std::move(targets)](Node<T>& self) {
        T* g = self.parents[0]->grad_buffer();
        const T scale = self.grad[0] * inv_batch;
        for (std::size_t b = 0; b < targets.size(); ++b) {
          for (std::size_t c = 0; c < classes; ++c) {
            const T onehot = static_cast<int>(c) == targets[b] ? T(1) : T(0);
            g[b * classes + c] += scale * (probs[b * classes + c] - onehot);
          }
        }
      });
}

#define COATTN_INSTANTIATE_OPS(T)                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&,                \
                            const Tensor<T>&);                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> scale(const Tensor<T>&, T);                               \
  template Tensor<T> sum(const Tensor<T>&);                                    \
  template Tensor<T> relu(const Tensor<T>&);                                   \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                   \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng&);            \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);          \
  template Tensor<T> stack(std::span<const Tensor<T>>, std::size_t);           \
  template Tensor<T> select(const Tensor<T>&, std::size_t, std::size_t);       \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t,        \
                           std::size_t);                                       \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                         \
  template Tensor<T> row_weighted_sum(const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> mean(const Tensor<T>&, std::size_t);                      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&,                \
                            const Tensor<T>&, Conv2dOptions);                  \
  template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t, std::size_t);   \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                        \
  template Tensor<T> lstm_cell(const Tensor<T>&, const Tensor<T>&,             \
                               const Tensor<T>&);                              \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);

COATTN_INSTANTIATE_OPS(float)
COATTN_INSTANTIATE_OPS(double)

#undef COATTN_INSTANTIATE_OPS

}  // namespace coattn::ad
