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
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "coattn/audio.hpp"
#include "coattn/matrix.hpp"
#include "coattn/ops.hpp"
#include "coattn/rng.hpp"
#include "coattn/tensor.hpp"

namespace coattn::model {

template <typename T>
using Tensor = ad::Tensor<T>;

template <typename T>
using NamedParameters = std::vector<std::pair<std::string, Tensor<T>>>;

// Affine layer stored as in x out so that y = x W + b.
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  Tensor<T> operator()(const Tensor<T>& x) const {
    return ad::linear(x, weight, bias);
  }
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

// Weights ~ U(-1/sqrt(in), 1/sqrt(in)), bias zero.
template <typename T>
Linear<T> make_linear(std::size_t in, std::size_t out, Rng& rng);

struct MfccEncoderConfig {
  std::size_t frames = 94;
  std::size_t coefficients = 40;
  std::size_t hidden = 64;  // per direction
  std::size_t out_dim = 128;
  double sequence_dropout = 0.5;
  double feature_dropout = 0.1;
};

// BiLSTM over the MFCC frames, flattened, then linear + ReLU.
template <typename T>
class MfccEncoder {
 public:
  MfccEncoder(const MfccEncoderConfig& config, Rng& init);

  // x: B x frames x coefficients -> B x out_dim
  Tensor<T> forward(const Tensor<T>& x, bool train, Rng& dropout) const;

  // Concatenated forward/backward hidden states, B x frames x 2*hidden,
  // before dropout.
  Tensor<T> sequence(const Tensor<T>& x) const;

  void collect(const std::string& prefix, NamedParameters<T>& out) const;
  const MfccEncoderConfig& config() const { return config_; }

 private:
  struct Direction {
    Tensor<T> input_weight;  // coefficients x 4H
    Tensor<T> bias;          // 4H, forget slice initialised to 1
    Tensor<T> recurrent;     // H x 4H
  };
  Tensor<T> run(const Direction& dir, const Tensor<T>& x, bool reverse) const;

  MfccEncoderConfig config_;
  Direction forward_;
  Direction backward_;
  Linear<T> projection_;
};

enum class CnnPreset { kMini, kAlexNet };

struct SpectrogramEncoderConfig {
  CnnPreset preset = CnnPreset::kMini;
  std::size_t rows = 300;
  std::size_t cols = 200;
  // Mini preset: one 3x3 stride-2 pad-1 conv + ReLU per entry.
  std::vector<std::size_t> channels{16, 32, 64, 64};
  std::size_t out_dim = 128;
  double feature_dropout = 0.1;
  // AlexNet preset only: CKPT file with features.{0,3,6,8,10}.{weight,bias}.
  // Empty means random initialisation.
  std::filesystem::path alexnet_weights;
};

struct SpatialShape {
  std::size_t channels;
  std::size_t height;
  std::size_t width;
  bool operator==(const SpatialShape&) const = default;
};

template <typename T>
class SpectrogramEncoder {
 public:
  SpectrogramEncoder(const SpectrogramEncoderConfig& config, Rng& init);

  // x: B x rows x cols -> B x out_dim
  Tensor<T> forward(const Tensor<T>& x, bool train, Rng& dropout) const;

  // Output shape of every conv block for the configured input size.
  std::vector<SpatialShape> feature_shapes() const;

  void collect(const std::string& prefix, NamedParameters<T>& out) const;
  const SpectrogramEncoderConfig& config() const { return config_; }

 private:
  struct Conv {
    Tensor<T> weight;
    Tensor<T> bias;
    std::size_t stride;
    std::size_t pad;
    bool pool_after;  // 3x3 stride-2 max pool (AlexNet)
    std::string name;
  };
  Tensor<T> features(const Tensor<T>& image) const;

  SpectrogramEncoderConfig config_;
  std::vector<Conv> convs_;
  Linear<T> projection_;
};

// Bilinear resize (half-pixel centres) of a rows x cols image.
Matrix<double> resize_bilinear(const Matrix<double>& image, std::size_t rows,
                               std::size_t cols);

// Frame-level embedding source standing in for a pretrained audio
// transformer. Implementations are read-only and safe to share across threads.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual std::size_t frames() const = 0;
  virtual std::size_t dim() const = 0;
  virtual bool deterministic() const { return true; }
  virtual Matrix<float> embed(const audio::AudioSegment& seg) const = 0;
};

// 64-band log-mel (window 400, hop 320 -> 149 frames) projected to 768 dims
// by a fixed seeded matrix, then standardised per frame.
class ToyEmbeddingProvider final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kFrames = 149;
  static constexpr std::size_t kDim = 768;
  static constexpr std::size_t kMels = 64;
  static constexpr std::size_t kWindow = 400;
  static constexpr std::size_t kHop = 320;
  static constexpr std::size_t kFft = 512;
  static constexpr std::uint64_t kProjectionSeed = 0x77326531ULL;

  ToyEmbeddingProvider();
  std::string name() const override { return "toy"; }
  std::size_t frames() const override { return kFrames; }
  std::size_t dim() const override { return kDim; }
  Matrix<float> embed(const audio::AudioSegment& seg) const override;

 private:
  Matrix<double> projection_;  // kMels x kDim
};

// Reads `<dir>/<utterance_id>.seg<k>.w2e`.
class FileEmbeddingProvider final : public EmbeddingProvider {
 public:
  FileEmbeddingProvider(std::filesystem::path dir, std::size_t frames = 149,
                        std::size_t dim = 768);
  std::string name() const override { return "file"; }
  std::size_t frames() const override { return frames_; }
  std::size_t dim() const override { return dim_; }
  Matrix<float> embed(const audio::AudioSegment& seg) const override;

 private:
  std::filesystem::path dir_;
  std::size_t frames_;
  std::size_t dim_;
};

// Validates the segment, runs the provider and checks the returned shape.
Matrix<float> embed_audio(const audio::AudioSegment& seg,
                          const EmbeddingProvider& provider);

}  // namespace coattn::model
