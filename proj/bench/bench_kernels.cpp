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

// Blocked/OpenMP kernels against the serial reference loops.

#include <benchmark/benchmark.h>

#include <vector>

#include "coattn/kernels.hpp"
#include "coattn/rng.hpp"

namespace {

using coattn::kernels::ConvGeometry;
using coattn::kernels::Trans;

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  coattn::Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

template <bool kReference>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1);
  const auto b = random_values(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (kReference) {
      coattn::kernels::reference::gemm(Trans::kNo, Trans::kNo, n, n, n, 1.0f, a.data(), n,
                                       b.data(), n, 0.0f, c.data(), n);
    } else {
      coattn::kernels::gemm(Trans::kNo, Trans::kNo, n, n, n, 1.0f, a.data(), n, b.data(),
                            n, 0.0f, c.data(), n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(
      2.0 * static_cast<double>(n * n * n) * static_cast<double>(state.iterations()),
      benchmark::Counter::kIsRate, benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Gemm<false>)->Name("gemm/blocked")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_Gemm<true>)->Name("gemm/reference")->Arg(64)->Arg(256)->Arg(512);

// Second block of the spectrogram encoder: 16 -> 32 channels on 150 x 100.
ConvGeometry encoder_block(std::size_t batch) {
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = 16;
  g.in_h = 150;
  g.in_w = 100;
  g.out_channels = 32;
  g.kernel_h = g.kernel_w = 3;
  g.stride = 2;
  g.pad = 1;
  return g;
}

template <bool kReference>
void BM_ConvForward(benchmark::State& state) {
  const ConvGeometry g = encoder_block(static_cast<std::size_t>(state.range(0)));
  const auto x = random_values(g.batch * g.in_channels * g.in_h * g.in_w, 3);
  const auto w = random_values(g.out_channels * g.patch(), 4);
  const auto bias = random_values(g.out_channels, 5);
  std::vector<float> y(g.batch * g.out_channels * g.out_h() * g.out_w());
  for (auto _ : state) {
    if constexpr (kReference) {
      coattn::kernels::reference::conv2d_forward(g, x.data(), w.data(), bias.data(), y.data());
    } else {
      coattn::kernels::conv2d_forward(g, x.data(), w.data(), bias.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/im2col")->Arg(8);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/reference")->Arg(8);

template <bool kReference>
void BM_ConvBackward(benchmark::State& state) {
  const ConvGeometry g = encoder_block(static_cast<std::size_t>(state.range(0)));
  const auto x = random_values(g.batch * g.in_channels * g.in_h * g.in_w, 3);
  const auto w = random_values(g.out_channels * g.patch(), 4);
  const auto dy = random_values(g.batch * g.out_channels * g.out_h() * g.out_w(), 6);
  std::vector<float> dx(x.size()), dw(w.size()), db(g.out_channels);
  for (auto _ : state) {
    if constexpr (kReference) {
      coattn::kernels::reference::conv2d_backward(g, x.data(), w.data(), dy.data(),
                                                  dx.data(), dw.data(), db.data());
    } else {
      coattn::kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(),
                                       dw.data(), db.data());
    }
    benchmark::DoNotOptimize(dx.data());
  }
}
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/im2col")->Arg(8);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/reference")->Arg(8);

}  // namespace

BENCHMARK_MAIN();
