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

#include "coattn/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include <omp.h>

namespace coattn::kernels {
namespace {

template <typename T>
struct Simd;
template <>
struct Simd<float> {
  typedef float V __attribute__((vector_size(64)));
  static constexpr std::size_t kLanes = 16;
};
template <>
struct Simd<double> {
  typedef double V __attribute__((vector_size(64)));
  static constexpr std::size_t kLanes = 8;
};

// Register tile: kMr rows by two SIMD vectors of columns.
constexpr std::size_t kMr = 8;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 128;
constexpr std::size_t kNc = 4096;

template <typename T>
constexpr std::size_t kNr = 2 * Simd<T>::kLanes;

// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 18;

template <typename T>
inline T element(const T* a, std::size_t ld, Trans t, std::size_t row,
                 std::size_t col) {
  return t == Trans::kNo ? a[row * ld + col] : a[col * ld + row];
}

// op(A)[i0:i0+mc, p0:p0+kc] -> ceil(mc/kMr) panels, each kc x kMr.
template <typename T>
void pack_a(Trans t, const T* a, std::size_t lda, std::size_t i0,
            std::size_t mc, std::size_t p0, std::size_t kc, T* out) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    const std::size_t mr = std::min(kMr, mc - ir);
    T* panel = out + ir * kc;
    for (std::size_t p = 0; p < kc; ++p) {
      std::size_t r = 0;
      for (; r < mr; ++r) {
        panel[p * kMr + r] = element(a, lda, t, i0 + ir + r, p0 + p);
      }
      for (; r < kMr; ++r) panel[p * kMr + r] = T(0);
    }
  }
}

// op(B)[p0:p0+kc, j0:j0+nc] -> ceil(nc/kNr) panels, each kc x kNr.
template <typename T>
void pack_b(Trans t, const T* b, std::size_t ldb, std::size_t p0,
            std::size_t kc, std::size_t j0, std::size_t nc, T* out) {
  constexpr std::size_t nr_full = kNr<T>;
  for (std::size_t jr = 0; jr < nc; jr += nr_full) {
    const std::size_t nr = std::min(nr_full, nc - jr);
    T* panel = out + jr * kc;
    for (std::size_t p = 0; p < kc; ++p) {
      T* dst = panel + p * nr_full;
      if (t == Trans::kNo) {
        std::memcpy(dst, b + (p0 + p) * ldb + j0 + jr, nr * sizeof(T));
      } else {
        for (std::size_t c = 0; c < nr; ++c) {
          dst[c] = b[(j0 + jr + c) * ldb + p0 + p];
        }
      }
      for (std::size_t c = nr; c < nr_full; ++c) dst[c] = T(0);
    }
  }
}

template <typename T>
void micro_kernel(std::size_t kc, const T* ap, const T* bp, T* tile) {
  using V = typename Simd<T>::V;
  constexpr std::size_t lanes = Simd<T>::kLanes;
  V acc0[kMr];
  V acc1[kMr];
  for (std::size_t r = 0; r < kMr; ++r) {
    acc0[r] = V{};
    acc1[r] = V{};
  }
  for (std::size_t p = 0; p < kc; ++p) {
    V b0;
    V b1;
    std::memcpy(&b0, bp + p * 2 * lanes, sizeof(V));
    std::memcpy(&b1, bp + p * 2 * lanes + lanes, sizeof(V));
    const T* a = ap + p * kMr;
#pragma GCC unroll 8
    for (std::size_t r = 0; r < kMr; ++r) {
      acc0[r] += a[r] * b0;
      acc1[r] += a[r] * b1;
    }
  }
  for (std::size_t r = 0; r < kMr; ++r) {
    std::memcpy(tile + r * 2 * lanes, &acc0[r], sizeof(V));
    std::memcpy(tile + r * 2 * lanes + lanes, &acc1[r], sizeof(V));
  }
}

template <typename T>
void scale_c(std::size_t m, std::size_t n, T beta, T* c, std::size_t ldc) {
  if (beta == T(1)) return;
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (beta == T(0)) {
      std::fill(row, row + n, T(0));
    } else {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
}

}  // namespace

template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n,
          std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T beta, T* c, std::size_t ldc) {
  scale_c(m, n, beta, c, ldc);
  if (m == 0 || n == 0 || k == 0 || alpha == T(0)) return;

  constexpr std::size_t nr_full = kNr<T>;
  const std::size_t nc_max = std::min(kNc, n);
  const std::size_t kc_max = std::min(kKc, k);
  const std::size_t mc_max = std::min(kMc, m);
  std::vector<T> packed_b(((nc_max + nr_full - 1) / nr_full) * nr_full *
                          kc_max);
  std::vector<T> packed_a(((mc_max + kMr - 1) / kMr) * kMr * kc_max);
  const bool parallel = m * n * k >= kParallelWork;

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    const std::size_t n_panels = (nc + nr_full - 1) / nr_full;
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      pack_b(trans_b, b, ldb, pc, kc, jc, nc, packed_b.data());
      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        pack_a(trans_a, a, lda, ic, mc, pc, kc, packed_a.data());
        const std::size_t m_panels = (mc + kMr - 1) / kMr;
#pragma omp parallel for schedule(static) if (parallel)
        for (std::size_t jp = 0; jp < n_panels; ++jp) {
          alignas(64) T tile[kMr * nr_full];
          const std::size_t jr = jp * nr_full;
          const std::size_t nr = std::min(nr_full, nc - jr);
          for (std::size_t mp = 0; mp < m_panels; ++mp) {
            const std::size_t ir = mp * kMr;
            const std::size_t mr = std::min(kMr, mc - ir);
            micro_kernel(kc, packed_a.data() + ir * kc,
                         packed_b.data() + jr * kc, tile);
            for (std::size_t r = 0; r < mr; ++r) {
              T* crow = c + (ic + ir + r) * ldc + jc + jr;
              const T* trow = tile + r * nr_full;
              for (std::size_t q = 0; q < nr; ++q) crow[q] += alpha * trow[q];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* columns) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  const std::size_t plane = oh * ow;
  for (std::size_t ch = 0; ch < g.in_channels; ++ch) {
    const T* src = image + ch * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        T* dst = columns + ((ch * g.kernel_h + ky) * g.kernel_w + kx) * plane;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          T* out = dst + oy * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(out, out + ow, T(0));
            continue;
          }
          const T* in_row = src + iy * g.in_w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                static_cast<std::ptrdiff_t>(g.pad);
            out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w))
                          ? T(0)
                          : in_row[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* columns, T* image) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  const std::size_t plane = oh * ow;
  for (std::size_t ch = 0; ch < g.in_channels; ++ch) {
    T* dst = image + ch * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const T* src =
            columns + ((ch * g.kernel_h + ky) * g.kernel_w + kx) * plane;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* out_row = dst + iy * g.in_w;
          const T* in = src + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) {
              out_row[ix] += in[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w,
                    const T* bias, T* y) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t in_size = g.in_channels * g.in_h * g.in_w;
  const std::size_t out_size = g.out_channels * plane;
  const std::size_t patch = g.patch();
#pragma omp parallel if (g.batch > 1)
  {
    std::vector<T> columns(patch * plane);
#pragma omp for schedule(static)
    for (std::size_t n = 0; n < g.batch; ++n) {
      im2col(g, x + n * in_size, columns.data());
      T* out = y + n * out_size;
      gemm(Trans::kNo, Trans::kNo, g.out_channels, plane, patch, T(1), w,
           patch, columns.data(), plane, T(0), out, plane);
      if (bias != nullptr) {
        for (std::size_t co = 0; co < g.out_channels; ++co) {
          T* o = out + co * plane;
          for (std::size_t s = 0; s < plane; ++s) o[s] += bias[co];
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w,
                     const T* dy, T* dx, T* dw, T* dbias) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t in_size = g.in_channels * g.in_h * g.in_w;
  const std::size_t out_size = g.out_channels * plane;
  const std::size_t patch = g.patch();

  if (dbias != nullptr) {
    for (std::size_t n = 0; n < g.batch; ++n) {
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        const T* d = dy + n * out_size + co * plane;
        T s = T(0);
        for (std::size_t i = 0; i < plane; ++i) s += d[i];
        dbias[co] += s;
      }
    }
  }
  std::vector<T> columns(patch * plane);
  // Samples are visited in order so the weight-gradient sum is reproducible.
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* dy_n = dy + n * out_size;
    if (dw != nullptr) {
      im2col(g, x + n * in_size, columns.data());
      gemm(Trans::kNo, Trans::kYes, g.out_channels, patch, plane, T(1), dy_n,
           plane, columns.data(), plane, T(1), dw, patch);
    }
    if (dx != nullptr) {
      gemm(Trans::kYes, Trans::kNo, patch, plane, g.out_channels, T(1), w,
           patch, dy_n, plane, T(0), columns.data(), plane);
      col2im(g, columns.data(), dx + n * in_size);
    }
  }
}

namespace reference {

template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n,
          std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = T(0);
      for (std::size_t p = 0; p < k; ++p) {
        sum += element(a, lda, trans_a, i, p) * element(b, ldb, trans_b, p, j);
      }
      T& dst = c[i * ldc + j];
      dst = alpha * sum + (beta == T(0) ? T(0) : beta * dst);
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w,
                    const T* bias, T* y) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T sum = bias != nullptr ? bias[co] : T(0);
          for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::ptrdiff_t iy =
                    static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                    static_cast<std::ptrdiff_t>(g.pad);
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                    static_cast<std::ptrdiff_t>(g.pad);
                if (iy < 0 || ix < 0 ||
                    iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                    ix >= static_cast<std::ptrdiff_t>(g.in_w)) {
                  continue;
                }
                sum += x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] *
                       w[((co * g.in_channels + ci) * g.kernel_h + ky) *
                             g.kernel_w + kx];
              }
            }
          }
          y[((n * g.out_channels + co) * oh + oy) * ow + ox] = sum;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w,
                     const T* dy, T* dx, T* dw, T* dbias) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T d = dy[((n * g.out_channels + co) * oh + oy) * ow + ox];
          if (dbias != nullptr) dbias[co] += d;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::ptrdiff_t iy =
                    static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                    static_cast<std::ptrdiff_t>(g.pad);
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                    static_cast<std::ptrdiff_t>(g.pad);
                if (iy < 0 || ix < 0 ||
                    iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                    ix >= static_cast<std::ptrdiff_t>(g.in_w)) {
                  continue;
                }
                const std::size_t xi =
                    ((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix;
                const std::size_t wi =
                    ((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w +
                    kx;
                if (dw != nullptr) dw[wi] += d * x[xi];
                if (dx != nullptr) dx[xi] += d * w[wi];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace reference

#define COATTN_INSTANTIATE_KERNELS(T)                                         \
  template void gemm<T>(Trans, Trans, std::size_t, std::size_t, std::size_t,  \
                        T, const T*, std::size_t, const T*, std::size_t, T,   \
                        T*, std::size_t);                                     \
  template void im2col<T>(const ConvGeometry&, const T*, T*);                 \
  template void col2im<T>(const ConvGeometry&, const T*, T*);                 \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*,    \
                                  const T*, T*);                              \
  template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*,   \
                                   const T*, T*, T*, T*);                     \
  template void reference::gemm<T>(Trans, Trans, std::size_t, std::size_t,    \
                                   std::size_t, T, const T*, std::size_t,     \
                                   const T*, std::size_t, T, T*, std::size_t);\
  template void reference::conv2d_forward<T>(const ConvGeometry&, const T*,   \
                                             const T*, const T*, T*);         \
  template void reference::conv2d_backward<T>(const ConvGeometry&, const T*,  \
                                              const T*, const T*, T*, T*, T*);

COATTN_INSTANTIATE_KERNELS(float)
COATTN_INSTANTIATE_KERNELS(double)

#undef COATTN_INSTANTIATE_KERNELS

}  // namespace coattn::kernels
