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
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "coattn/dsp.hpp"
#include "coattn/encoders.hpp"
#include "coattn/feature_io.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace coattn;
using coattn::testing::gradient_error;
using coattn::testing::probe;
using coattn::testing::random_tensor;
using coattn::testing::TensorD;

namespace {

std::map<std::string, TensorD> by_name(const model::NamedParameters<double>& params) {
  std::map<std::string, TensorD> out;
  for (const auto& [n, t] : params) out.emplace(n, t);
  return out;
}

std::vector<TensorD> values_of(const model::NamedParameters<double>& params) {
  std::vector<TensorD> out;
  for (const auto& [n, t] : params) out.push_back(t);
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar LSTM over one sequence (gate order i, f, g, o), hidden states only.
std::vector<std::vector<double>> scalar_lstm(const std::vector<std::vector<double>>& xs,
                                             const TensorD& wx, const TensorD& wh,
                                             const TensorD& b, bool reverse) {
  const std::size_t h = wh.dim(0);
  const std::size_t in = wx.dim(0);
  const std::size_t steps = xs.size();
  std::vector<std::vector<double>> out(steps, std::vector<double>(h));
  std::vector<double> hid(h, 0.0), cell(h, 0.0);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    std::vector<double> z(4 * h);
    for (std::size_t j = 0; j < 4 * h; ++j) {
      double acc = b.data()[j];
      for (std::size_t i = 0; i < in; ++i) acc += xs[t][i] * wx.data()[i * 4 * h + j];
      for (std::size_t i = 0; i < h; ++i) acc += hid[i] * wh.data()[i * 4 * h + j];
      z[j] = acc;
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = sigmoid(z[j]);
      const double fg = sigmoid(z[h + j]);
      const double gg = std::tanh(z[2 * h + j]);
      const double og = sigmoid(z[3 * h + j]);
      cell[j] = fg * cell[j] + ig * gg;
      hid[j] = og * std::tanh(cell[j]);
    }
    out[t] = hid;
  }
  return out;
}

model::MfccEncoderConfig tiny_mfcc() {
  model::MfccEncoderConfig c;
  c.frames = 4;
  c.coefficients = 3;
  c.hidden = 3;
  c.out_dim = 5;
  return c;
}

model::SpectrogramEncoderConfig tiny_spec() {
  model::SpectrogramEncoderConfig c;
  c.rows = 9;
  c.cols = 7;
  c.channels = {2, 2};
  c.out_dim = 4;
  return c;
}

audio::AudioSegment chirp_segment() {
  audio::AudioSegment seg;
  seg.samples.resize(audio::kSegmentSamples);
  for (std::size_t i = 0; i < seg.samples.size(); ++i) {
    const double t = static_cast<double>(i) / 16000.0;
    seg.samples[i] = static_cast<float>(0.3 * std::sin(2.0 * std::numbers::pi * (200.0 + 300.0 * t) * t));
  }
  seg.valid_samples = seg.samples.size();
  seg.source_utterance = "chirp";
  return seg;
}

}  // namespace

TEST_SUITE("encoders") {
  TEST_CASE("MFCC branch output is 128 non-negative values") {
    Rng init(1), drop(2), data(3);
    const model::MfccEncoder<double> enc({}, init);
    const TensorD x = random_tensor({2, 94, 40}, data, false);
    for (bool train : {false, true}) {
      const TensorD y = enc.forward(x, train, drop);
      CHECK(y.shape() == ad::Shape{2, 128});
      for (double v : y.data()) REQUIRE(v >= 0.0);
    }
    CHECK(enc.forward(x, false, drop).data().size() == 256);
  }

  TEST_CASE("eval-mode forward is deterministic") {
    Rng init(4), d1(5), d2(6), data(7);
    const model::MfccEncoder<double> enc(tiny_mfcc(), init);
    const TensorD x = random_tensor({3, 4, 3}, data, false);
    const TensorD a = enc.forward(x, false, d1);
    const TensorD b = enc.forward(x, false, d2);
    CHECK(std::vector<double>(a.data().begin(), a.data().end()) ==
          std::vector<double>(b.data().begin(), b.data().end()));
  }

  TEST_CASE("BiLSTM sequence matches a scalar recurrence") {
    Rng init(8), data(9);
    auto cfg = tiny_mfcc();
    cfg.frames = 6;
    const model::MfccEncoder<double> enc(cfg, init);
    model::NamedParameters<double> named;
    enc.collect("", named);
    auto p = by_name(named);
    const TensorD x = random_tensor({2, 6, 3}, data, false);
    const TensorD seq = enc.sequence(x);
    REQUIRE(seq.shape() == ad::Shape{2, 6, 6});
    double worst = 0.0;
    for (std::size_t b = 0; b < 2; ++b) {
      std::vector<std::vector<double>> xs(6, std::vector<double>(3));
      for (std::size_t t = 0; t < 6; ++t)
        for (std::size_t i = 0; i < 3; ++i) xs[t][i] = x.data()[(b * 6 + t) * 3 + i];
      const auto fw = scalar_lstm(xs, p["lstm.forward.input_weight"],
                                  p["lstm.forward.recurrent"], p["lstm.forward.bias"], false);
      const auto bw = scalar_lstm(xs, p["lstm.backward.input_weight"],
                                  p["lstm.backward.recurrent"], p["lstm.backward.bias"], true);
      for (std::size_t t = 0; t < 6; ++t)
        for (std::size_t j = 0; j < 3; ++j) {
          worst = std::max(worst, std::abs(seq.data()[(b * 6 + t) * 6 + j] - fw[t][j]));
          worst = std::max(worst, std::abs(seq.data()[(b * 6 + t) * 6 + 3 + j] - bw[t][j]));
        }
    }
    CHECK(worst < 1e-12);
  }

  TEST_CASE("forget gate bias starts at one") {
    Rng init(10);
    const model::MfccEncoder<double> enc(tiny_mfcc(), init);
    model::NamedParameters<double> named;
    enc.collect("m.", named);
    auto p = by_name(named);
    const auto bias = p.at("m.lstm.forward.bias").data();
    for (std::size_t j = 0; j < 12; ++j) CHECK(bias[j] == (j >= 3 && j < 6 ? 1.0 : 0.0));
  }

  TEST_CASE("MFCC encoder gradients") {
    Rng init(11), drop(12), data(13), pr(14);
    const model::MfccEncoder<double> enc(tiny_mfcc(), init);
    model::NamedParameters<double> named;
    enc.collect("", named);
    const TensorD x = random_tensor({2, 4, 3}, data, true);
    const TensorD r = random_tensor({2, 5}, pr, false);
    auto params = values_of(named);
    params.push_back(x);
    const double err = gradient_error(params, [&] {
      return ad::sum(ad::mul(enc.forward(x, false, drop), r));
    });
    CHECK(err < 1e-6);
  }

  TEST_CASE("mini CNN block shapes for a 300 x 200 image") {
    Rng init(15);
    const model::SpectrogramEncoder<float> enc({}, init);
    const auto shapes = enc.feature_shapes();
    REQUIRE(shapes.size() == 4);
    CHECK(shapes[0] == model::SpatialShape{16, 150, 100});
    CHECK(shapes[1] == model::SpatialShape{32, 75, 50});
    CHECK(shapes[2] == model::SpatialShape{64, 38, 25});
    CHECK(shapes[3] == model::SpatialShape{64, 19, 13});
  }

  TEST_CASE("spectrogram branch output and silent input") {
    Rng init(16), drop(17);
    const model::SpectrogramEncoder<float> enc({}, init);
    const auto zero = ad::Tensor<float>::zeros({1, 300, 200});
    const auto y = enc.forward(zero, false, drop);
    CHECK(y.shape() == ad::Shape{1, 128});
    for (float v : y.data()) CHECK(std::isfinite(v));
  }

  TEST_CASE("spectrogram encoder gradients") {
    Rng init(18), drop(19), data(20), pr(21);
    const model::SpectrogramEncoder<double> enc(tiny_spec(), init);
    model::NamedParameters<double> named;
    enc.collect("", named);
    const TensorD x = random_tensor({2, 9, 7}, data, true);
    const TensorD r = random_tensor({2, 4}, pr, false);
    auto params = values_of(named);
    params.push_back(x);
    const double err = gradient_error(params, [&] {
      return ad::sum(ad::mul(enc.forward(x, false, drop), r));
    });
    CHECK(err < 1e-6);
  }

  TEST_CASE("AlexNet preset geometry and missing weights") {
    model::SpectrogramEncoderConfig cfg;
    cfg.preset = model::CnnPreset::kAlexNet;
    Rng init(22);
    const model::SpectrogramEncoder<float> enc(cfg, init);
    const auto shapes = enc.feature_shapes();
    REQUIRE(shapes.size() == 5);
    // Block outputs after the pooling layers; 256 x 6 x 6 flattens to 9216.
    CHECK(shapes[0] == model::SpatialShape{64, 27, 27});
    CHECK(shapes[4] == model::SpatialShape{256, 6, 6});
    model::NamedParameters<float> named;
    enc.collect("", named);
    CHECK(named.front().first == "features.0.weight");
    cfg.alexnet_weights = "/nonexistent/alexnet.ckpt";
    Rng init2(23);
    CHECK_THROWS_AS(model::SpectrogramEncoder<float>(cfg, init2), std::runtime_error);
  }

  TEST_CASE("bilinear resize") {
    Matrix<double> img(2, 2);
    img.values = {0.0, 1.0, 2.0, 3.0};
    const auto same = model::resize_bilinear(img, 2, 2);
    CHECK(same == img);
    Matrix<double> flat(3, 5, 0.7);
    for (double v : model::resize_bilinear(flat, 224, 224).values) REQUIRE(v == doctest::Approx(0.7));
    // Half-pixel centres: upsampling 1 x 2 to 1 x 4 gives 0, .25, .75, 1.
    Matrix<double> row(1, 2);
    row.values = {0.0, 1.0};
    const auto up = model::resize_bilinear(row, 1, 4);
    CHECK(up.values[0] == doctest::Approx(0.0));
    CHECK(up.values[1] == doctest::Approx(0.25));
    CHECK(up.values[2] == doctest::Approx(0.75));
    CHECK(up.values[3] == doctest::Approx(1.0));
  }

  TEST_CASE("toy embedding provider") {
    const model::ToyEmbeddingProvider provider;
    const auto seg = chirp_segment();
    const auto e = model::embed_audio(seg, provider);
    REQUIRE(e.rows == 149);
    REQUIRE(e.cols == 768);
    CHECK(e == provider.embed(seg));
    for (std::size_t t = 0; t < e.rows; ++t) {
      double m = 0.0, v = 0.0;
      for (float x : e.row(t)) m += x;
      m /= 768.0;
      for (float x : e.row(t)) v += (x - m) * (x - m);
      v /= 768.0;
      CHECK(std::abs(m) < 1e-5);
      CHECK(std::abs(v - 1.0) < 1e-5);
    }
  }

  TEST_CASE("file embedding provider") {
    const auto dir = std::filesystem::temp_directory_path() / "coattn_file_provider";
    std::filesystem::create_directories(dir);
    Matrix<float> m(5, 6);
    for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = static_cast<float>(i);
    save_w2e(dir / embedding_filename("utt", 1), m);
    const model::FileEmbeddingProvider provider(dir, 5, 6);
    audio::AudioSegment seg = chirp_segment();
    seg.source_utterance = "utt";
    seg.index = 1;
    CHECK(model::embed_audio(seg, provider) == m);
    seg.index = 2;
    CHECK_THROWS(model::embed_audio(seg, provider));
    const model::FileEmbeddingProvider wrong(dir, 149, 768);
    seg.index = 1;
    CHECK_THROWS_AS(model::embed_audio(seg, wrong), ad::ShapeError);
    std::filesystem::remove_all(dir);
  }
}
