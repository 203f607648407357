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
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "coattn/encoders.hpp"
#include "coattn/evaluation.hpp"
#include "coattn/training.hpp"

namespace coattn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ProviderKind { kToy, kFile };

// Everything a CLI run needs. Field names double as config-file keys.
struct RunConfig {
  TrainConfig train;
  SplitStrategy strategy = SplitStrategy::kSession;
  ProviderKind provider = ProviderKind::kToy;
  std::filesystem::path manifest;
  std::filesystem::path cache_dir;
  std::filesystem::path out_dir = "out";
  std::filesystem::path embeddings_dir;  // provider=file
  std::optional<std::size_t> max_folds;
  bool drop_unknown_labels = false;
  bool emit_history = true;
  bool emit_checkpoints = true;
  bool emit_features = true;  // export: also write the pooled-embedding dump

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

// Applies one key=value setting; throws ConfigError for unknown keys or
// unparsable values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

// UTF-8 key=value lines; '#' starts a comment. Later lines win.
void parse_config(std::istream& is, const std::string& source, RunConfig& config);
void load_config(const std::filesystem::path& path, RunConfig& config);

std::unique_ptr<model::EmbeddingProvider> make_provider(const RunConfig& config);

}  // namespace coattn
