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

#include "coattn/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>

namespace coattn {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value,
                            const char* expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) +
                    " (expected " + expected + ")");
}

double to_double(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(std::string(v), &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    bad_value(key, v, "a non-negative integer");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto flag = [&t](const char* name, bool model::ModelConfig::*member) {
      t[name] = [member](RunConfig& c, std::string_view k, std::string_view v) {
        c.train.model.*member = to_bool(k, v);
      };
    };
    t["lr"] = [](RunConfig& c, auto k, auto v) { c.train.lr = to_double(k, v); };
    t["batch_size"] = [](RunConfig& c, auto k, auto v) { c.train.batch_size = to_size(k, v); };
    t["patience"] = [](RunConfig& c, auto k, auto v) { c.train.patience = to_size(k, v); };
    t["early_stop_patience"] = t["patience"];
    t["max_epochs"] = [](RunConfig& c, auto k, auto v) { c.train.max_epochs = to_size(k, v); };
    t["seed"] = [](RunConfig& c, auto k, auto v) { c.train.seed = to_size(k, v); };
    t["weight_decay"] = [](RunConfig& c, auto k, auto v) {
      c.train.weight_decay = to_double(k, v);
    };
    t["validation_fraction"] = [](RunConfig& c, auto k, auto v) {
      c.train.validation_fraction = to_double(k, v);
    };
    t["stop_at_train_accuracy"] = [](RunConfig& c, auto k, auto v) {
      if (v.empty() || v == "none") {
        c.train.stop_at_train_accuracy.reset();
      } else {
        c.train.stop_at_train_accuracy = to_double(k, v);
      }
    };
    t["attention"] = [](RunConfig& c, auto k, auto v) {
      if (v == "softmax") {
        c.train.model.attention = model::AttentionMode::kSoftmax;
      } else if (v == "raw") {
        c.train.model.attention = model::AttentionMode::kRaw;
      } else {
        bad_value(k, v, "softmax or raw");
      }
    };
    t["normalization"] = t["attention"];
    flag("use_mfcc", &model::ModelConfig::use_mfcc);
    flag("use_spectrogram", &model::ModelConfig::use_spectrogram);
    flag("use_embedding", &model::ModelConfig::use_embedding);
    flag("coattention", &model::ModelConfig::coattention);
    flag("attend_mfcc", &model::ModelConfig::attend_mfcc);
    flag("attend_spectrogram", &model::ModelConfig::attend_spectrogram);
    t["preset"] = [](RunConfig& c, auto k, auto v) {
      if (v == "mini") {
        c.train.model.spectrogram.preset = model::CnnPreset::kMini;
      } else if (v == "alexnet") {
        c.train.model.spectrogram.preset = model::CnnPreset::kAlexNet;
      } else {
        bad_value(k, v, "mini or alexnet");
      }
    };
    t["alexnet_weights"] = [](RunConfig& c, auto, auto v) {
      c.train.model.spectrogram.alexnet_weights = std::string(v);
    };
    t["strategy"] = [](RunConfig& c, auto k, auto v) {
      try {
        c.strategy = parse_strategy(v);
      } catch (const std::invalid_argument&) {
        bad_value(k, v, "session or speaker");
      }
    };
    t["provider"] = [](RunConfig& c, auto k, auto v) {
      if (v == "toy") {
        c.provider = ProviderKind::kToy;
      } else if (v == "file") {
        c.provider = ProviderKind::kFile;
      } else {
        bad_value(k, v, "toy or file");
      }
    };
    t["manifest"] = [](RunConfig& c, auto, auto v) { c.manifest = std::string(v); };
    t["cache_dir"] = [](RunConfig& c, auto, auto v) { c.cache_dir = std::string(v); };
    t["out_dir"] = [](RunConfig& c, auto, auto v) { c.out_dir = std::string(v); };
    t["embeddings_dir"] = [](RunConfig& c, auto, auto v) {
      c.embeddings_dir = std::string(v);
    };
    t["max_folds"] = [](RunConfig& c, auto k, auto v) {
      if (v.empty() || v == "all") {
        c.max_folds.reset();
      } else {
        c.max_folds = to_size(k, v);
      }
    };
    t["drop_unknown_labels"] = [](RunConfig& c, auto k, auto v) {
      c.drop_unknown_labels = to_bool(k, v);
    };
    t["emit_history"] = [](RunConfig& c, auto k, auto v) { c.emit_history = to_bool(k, v); };
    t["emit_checkpoints"] = [](RunConfig& c, auto k, auto v) {
      c.emit_checkpoints = to_bool(k, v);
    };
    t["emit_features"] = [](RunConfig& c, auto k, auto v) {
      c.emit_features = to_bool(k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (provider == ProviderKind::kFile && train.model.use_embedding && embeddings_dir.empty()) {
    throw ConfigError("provider=file needs embeddings_dir");
  }
  if (max_folds && *max_folds == 0) throw ConfigError("max_folds must be >= 1");
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  const auto& table = setters();
  const auto it = table.find(trim(key));
  if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(config, trim(key), trim(value));
}

void parse_config(std::istream& is, const std::string& source, RunConfig& config) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      apply_setting(config, view.substr(0, eq), view.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void load_config(const std::filesystem::path& path, RunConfig& config) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  parse_config(is, path.string(), config);
}

std::unique_ptr<model::EmbeddingProvider> make_provider(const RunConfig& config) {
  if (config.provider == ProviderKind::kFile) {
    return std::make_unique<model::FileEmbeddingProvider>(
        config.embeddings_dir, config.train.model.embedding_frames,
        config.train.model.embedding_dim);
  }
  return std::make_unique<model::ToyEmbeddingProvider>();
}

}  // namespace coattn
