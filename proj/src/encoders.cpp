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

#include "coattn/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "coattn/checkpoint.hpp"
#include "coattn/dsp.hpp"
#include "coattn/feature_io.hpp"

namespace coattn::model {
namespace {

template <typename T>
Tensor<T> uniform_tensor(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<T> values(ad::numel(shape));
  for (T& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from(std::move(shape), std::move(values), true);
}

void require_shape(const char* what, const ad::Shape& got,
                   const ad::Shape& expected) {
  if (got != expected) {
    throw ad::ShapeError(std::string(what) + ": expected input " +
                         ad::to_string(expected) + ", got " + ad::to_string(got));
  }
}

struct AlexNetLayer {
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t pad;
  bool pool_after;
  const char* name;
};

// Canonical AlexNet feature extractor, named after the usual state-dict keys.
constexpr AlexNetLayer kAlexNet[] = {
    {64, 11, 4, 2, true, "features.0"},
    {192, 5, 1, 2, true, "features.3"},
    {384, 3, 1, 1, false, "features.6"},
    {256, 3, 1, 1, false, "features.8"},
    {256, 3, 1, 1, true, "features.10"},
};
constexpr std::size_t kAlexNetInput = 224;

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  return (in + 2 * p - k) / s + 1;
}

}  // namespace

template <typename T>
Linear<T> make_linear(std::size_t in, std::size_t out, Rng& rng) {
  Linear<T> layer;
  layer.weight = uniform_tensor<T>({in, out}, in, rng);
  layer.bias = Tensor<T>::zeros({out}, true);
  return layer;
}

// ---------------------------------------------------------------------------
// MFCC branch

template <typename T>
MfccEncoder<T>::MfccEncoder(const MfccEncoderConfig& config, Rng& init)
    : config_(config) {
  const std::size_t h = config.hidden;
  for (Direction* dir : {&forward_, &backward_}) {
    dir->input_weight = uniform_tensor<T>({config.coefficients, 4 * h},
                                          config.coefficients, init);
    dir->recurrent = uniform_tensor<T>({h, 4 * h}, h, init);
    std::vector<T> bias(4 * h, T(0));
    std::fill(bias.begin() + static_cast<std::ptrdiff_t>(h),
              bias.begin() + static_cast<std::ptrdiff_t>(2 * h), T(1));
    dir->bias = Tensor<T>::from({4 * h}, std::move(bias), true);
  }
  projection_ = make_linear<T>(config.frames * 2 * h, config.out_dim, init);
}

template <typename T>
Tensor<T> MfccEncoder<T>::run(const Direction& dir, const Tensor<T>& x,
                              bool reverse) const {
  const std::size_t batch = x.dim(0);
  const std::size_t frames = config_.frames;
  const std::size_t h = config_.hidden;
  // Input contributions for every step in one product.
  Tensor<T> flat = ad::reshape(x, {batch * frames, config_.coefficients});
  Tensor<T> proj = ad::reshape(ad::linear(flat, dir.input_weight, dir.bias),
                               {batch, frames, 4 * h});
  Tensor<T> state = Tensor<T>::zeros({batch, 2 * h});
  std::vector<Tensor<T>> states(frames);
  for (std::size_t step = 0; step < frames; ++step) {
    const std::size_t t = reverse ? frames - 1 - step : step;
    state = ad::lstm_cell(ad::select(proj, 1, t), state, dir.recurrent);
    states[t] = state;
  }
  // B x frames x 2H packed states -> hidden halves.
  return ad::slice(ad::stack<T>(states, 1), 2, 0, h);
}

template <typename T>
Tensor<T> MfccEncoder<T>::sequence(const Tensor<T>& x) const {
  require_shape("encode_mfcc", x.shape(),
                {x.rank() == 3 ? x.dim(0) : 0, config_.frames, config_.coefficients});
  const Tensor<T> parts[] = {run(forward_, x, false), run(backward_, x, true)};
  return ad::concat<T>(parts, 2);
}

template <typename T>
Tensor<T> MfccEncoder<T>::forward(const Tensor<T>& x, bool train,
                                  Rng& dropout) const {
  Tensor<T> seq = ad::dropout(sequence(x), config_.sequence_dropout, train, dropout);
  const std::size_t batch = x.dim(0);
  Tensor<T> flat = ad::reshape(seq, {batch, config_.frames * 2 * config_.hidden});
  return ad::dropout(ad::relu(projection_(flat)), config_.feature_dropout, train,
                     dropout);
}

template <typename T>
void MfccEncoder<T>::collect(const std::string& prefix,
                             NamedParameters<T>& out) const {
  out.emplace_back(prefix + "lstm.forward.input_weight", forward_.input_weight);
  out.emplace_back(prefix + "lstm.forward.recurrent", forward_.recurrent);
  out.emplace_back(prefix + "lstm.forward.bias", forward_.bias);
  out.emplace_back(prefix + "lstm.backward.input_weight", backward_.input_weight);
  out.emplace_back(prefix + "lstm.backward.recurrent", backward_.recurrent);
  out.emplace_back(prefix + "lstm.backward.bias", backward_.bias);
  out.emplace_back(prefix + "projection.weight", projection_.weight);
  out.emplace_back(prefix + "projection.bias", projection_.bias);
}

// ---------------------------------------------------------------------------
// Spectrogram branch

template <typename T>
SpectrogramEncoder<T>::SpectrogramEncoder(const SpectrogramEncoderConfig& config,
                                          Rng& init)
    : config_(config) {
  auto add_conv = [&](std::size_t in_c, std::size_t out_c, std::size_t k,
                      std::size_t stride, std::size_t pad, bool pool,
                      std::string name) {
    Conv conv;
    conv.weight = uniform_tensor<T>({out_c, in_c, k, k}, in_c * k * k, init);
    conv.bias = Tensor<T>::zeros({out_c}, true);
    conv.stride = stride;
    conv.pad = pad;
    conv.pool_after = pool;
    conv.name = std::move(name);
    convs_.push_back(std::move(conv));
  };

  std::size_t flat_features = 0;
  if (config.preset == CnnPreset::kMini) {
    if (config.channels.empty()) {
      throw std::invalid_argument("spectrogram encoder: no conv channels configured");
    }
    std::size_t in_c = 1;
    for (std::size_t i = 0; i < config.channels.size(); ++i) {
      add_conv(in_c, config.channels[i], 3, 2, 1, false,
               "conv" + std::to_string(i));
      in_c = config.channels[i];
    }
    flat_features = in_c;  // after global average pooling
  } else {
    std::size_t in_c = 3;
    for (const auto& layer : kAlexNet) {
      add_conv(in_c, layer.out_channels, layer.kernel, layer.stride, layer.pad,
               layer.pool_after, layer.name);
      in_c = layer.out_channels;
    }
    flat_features = in_c * 6 * 6;
    if (!config.alexnet_weights.empty()) {
      if (!std::filesystem::exists(config.alexnet_weights)) {
        throw std::runtime_error("alexnet preset: weights file not found: " +
                                 config.alexnet_weights.string());
      }
      const Checkpoint ckpt = load_checkpoint(config.alexnet_weights);
      for (Conv& conv : convs_) {
        for (auto [suffix, tensor] :
             {std::pair{".weight", &conv.weight}, std::pair{".bias", &conv.bias}}) {
          const CheckpointEntry* e = ckpt.find(conv.name + suffix);
          if (e == nullptr || e->data.size() != tensor->numel()) {
            throw std::runtime_error("alexnet preset: missing or mis-shaped " +
                                     conv.name + suffix + " in " +
                                     config.alexnet_weights.string());
          }
          std::copy(e->data.begin(), e->data.end(), tensor->mutable_data().begin());
        }
      }
    }
  }
  projection_ = make_linear<T>(flat_features, config.out_dim, init);
}

template <typename T>
std::vector<SpatialShape> SpectrogramEncoder<T>::feature_shapes() const {
  std::vector<SpatialShape> shapes;
  std::size_t h = config_.rows, w = config_.cols;
  if (config_.preset == CnnPreset::kAlexNet) h = w = kAlexNetInput;
  for (const Conv& conv : convs_) {
    const std::size_t k = conv.weight.dim(2);
    h = conv_out(h, k, conv.stride, conv.pad);
    w = conv_out(w, k, conv.stride, conv.pad);
    if (conv.pool_after) {
      h = conv_out(h, 3, 2, 0);
      w = conv_out(w, 3, 2, 0);
    }
    shapes.push_back({conv.weight.dim(0), h, w});
  }
  return shapes;
}

template <typename T>
Tensor<T> SpectrogramEncoder<T>::features(const Tensor<T>& image) const {
  Tensor<T> h = image;
  for (const Conv& conv : convs_) {
    h = ad::relu(ad::conv2d(h, conv.weight, conv.bias, {conv.stride, conv.pad}));
    if (conv.pool_after) h = ad::max_pool2d(h, 3, 2);
  }
  if (config_.preset == CnnPreset::kMini) return ad::global_avg_pool(h);
  return ad::reshape(h, {h.dim(0), h.dim(1) * h.dim(2) * h.dim(3)});
}

template <typename T>
Tensor<T> SpectrogramEncoder<T>::forward(const Tensor<T>& x, bool train,
                                         Rng& dropout) const {
  require_shape("encode_spectrogram", x.shape(),
                {x.rank() == 3 ? x.dim(0) : 0, config_.rows, config_.cols});
  const std::size_t batch = x.dim(0);
  Tensor<T> image;
  if (config_.preset == CnnPreset::kMini) {
    image = ad::reshape(x, {batch, 1, config_.rows, config_.cols});
  } else {
    // Resize and replicate to three channels; not differentiated.
    const std::size_t plane = kAlexNetInput * kAlexNetInput;
    std::vector<T> values(batch * 3 * plane);
    for (std::size_t b = 0; b < batch; ++b) {
      Matrix<double> src(config_.rows, config_.cols);
      const auto in = x.data().subspan(b * config_.rows * config_.cols,
                                       config_.rows * config_.cols);
      std::copy(in.begin(), in.end(), src.values.begin());
      const Matrix<double> resized =
          resize_bilinear(src, kAlexNetInput, kAlexNetInput);
      for (std::size_t c = 0; c < 3; ++c) {
        std::copy(resized.values.begin(), resized.values.end(),
                  values.begin() + static_cast<std::ptrdiff_t>((b * 3 + c) * plane));
      }
    }
    image = Tensor<T>::from({batch, 3, kAlexNetInput, kAlexNetInput}, std::move(values));
  }
  return ad::dropout(ad::relu(projection_(features(image))),
                     config_.feature_dropout, train, dropout);
}

template <typename T>
void SpectrogramEncoder<T>::collect(const std::string& prefix,
                                    NamedParameters<T>& out) const {
  for (const Conv& conv : convs_) {
    out.emplace_back(prefix + conv.name + ".weight", conv.weight);
    out.emplace_back(prefix + conv.name + ".bias", conv.bias);
  }
  out.emplace_back(prefix + "projection.weight", projection_.weight);
  out.emplace_back(prefix + "projection.bias", projection_.bias);
}

Matrix<double> resize_bilinear(const Matrix<double>& image, std::size_t rows,
                               std::size_t cols) {
  Matrix<double> out(rows, cols);
  const double sy = static_cast<double>(image.rows) / static_cast<double>(rows);
  const double sx = static_cast<double>(image.cols) / static_cast<double>(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double fy = std::max(0.0, (static_cast<double>(r) + 0.5) * sy - 0.5);
    const auto y0 = std::min(static_cast<std::size_t>(fy), image.rows - 1);
    const std::size_t y1 = std::min(y0 + 1, image.rows - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t c = 0; c < cols; ++c) {
      const double fx = std::max(0.0, (static_cast<double>(c) + 0.5) * sx - 0.5);
      const auto x0 = std::min(static_cast<std::size_t>(fx), image.cols - 1);
      const std::size_t x1 = std::min(x0 + 1, image.cols - 1);
      const double wx = fx - static_cast<double>(x0);
      out(r, c) = (1 - wy) * ((1 - wx) * image(y0, x0) + wx * image(y0, x1)) +
                  wy * ((1 - wx) * image(y1, x0) + wx * image(y1, x1));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding providers

ToyEmbeddingProvider::ToyEmbeddingProvider() : projection_(kMels, kDim) {
  Rng rng(kProjectionSeed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kMels));
  for (double& v : projection_.values) v = rng.normal() * scale;
}

Matrix<float> ToyEmbeddingProvider::embed(const audio::AudioSegment& seg) const {
  dsp::validate_segment(seg);
  const std::vector<double> signal(seg.samples.begin(), seg.samples.end());
  const Matrix<double> mel = dsp::log_mel_frames(signal, kWindow, kHop, kFft, kMels);
  Matrix<float> out(mel.rows, kDim);
  std::vector<double> frame(kDim);
  for (std::size_t t = 0; t < mel.rows; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    for (std::size_t m = 0; m < kMels; ++m) {
      const double v = mel(t, m);
      const auto prow = projection_.row(m);
      for (std::size_t d = 0; d < kDim; ++d) frame[d] += v * prow[d];
    }
    double mu = 0.0;
    for (double v : frame) mu += v;
    mu /= kDim;
    double var = 0.0;
    for (double v : frame) var += (v - mu) * (v - mu);
    var /= kDim;
    const double inv = 1.0 / std::sqrt(var + 1e-12);
    for (std::size_t d = 0; d < kDim; ++d) {
      out(t, d) = static_cast<float>((frame[d] - mu) * inv);
    }
  }
  return out;
}

FileEmbeddingProvider::FileEmbeddingProvider(std::filesystem::path dir,
                                             std::size_t frames, std::size_t dim)
    : dir_(std::move(dir)), frames_(frames), dim_(dim) {}

Matrix<float> FileEmbeddingProvider::embed(const audio::AudioSegment& seg) const {
  const auto path = dir_ / embedding_filename(seg.source_utterance, seg.index);
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("embedding file not found: " + path.string());
  }
  return load_w2e(path);
}

Matrix<float> embed_audio(const audio::AudioSegment& seg,
                          const EmbeddingProvider& provider) {
  dsp::validate_segment(seg);
  Matrix<float> out = provider.embed(seg);
  if (out.rows != provider.frames() || out.cols != provider.dim()) {
    throw ad::ShapeError("embedding provider '" + provider.name() +
                         "' returned " + std::to_string(out.rows) + "x" +
                         std::to_string(out.cols) + ", configured for " +
                         std::to_string(provider.frames()) + "x" +
                         std::to_string(provider.dim()));
  }
  return out;
}

template Linear<float> make_linear(std::size_t, std::size_t, Rng&);
template Linear<double> make_linear(std::size_t, std::size_t, Rng&);
template class MfccEncoder<float>;
template class MfccEncoder<double>;
template class SpectrogramEncoder<float>;
template class SpectrogramEncoder<double>;

}  // namespace coattn::model
