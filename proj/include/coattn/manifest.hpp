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
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace coattn {

struct ManifestRecord {
  std::string utterance_id;
  std::filesystem::path wav_path;  // absolute, or relative to the manifest
  int session = 0;                 // 1..5
  std::string speaker_id;
  std::string gender;
  std::string raw_label;
  int label = 0;  // emotion index after merging
};

class ManifestError : public std::runtime_error {
 public:
  ManifestError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ManifestOptions {
  // Skip rows whose label is outside the four classes instead of failing.
  bool drop_unknown_labels = false;
};

class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(std::vector<ManifestRecord> records,
                    std::filesystem::path base_dir = {});

  const std::vector<ManifestRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const ManifestRecord& at(const std::string& utterance_id) const;
  bool contains(const std::string& utterance_id) const;
  // wav_path resolved against the manifest directory.
  std::filesystem::path resolve(const ManifestRecord& record) const;
  const std::filesystem::path& base_dir() const { return base_dir_; }
  // Rows dropped by ManifestOptions::drop_unknown_labels.
  std::size_t dropped() const { return dropped_; }
  void set_dropped(std::size_t n) { dropped_ = n; }

 private:
  std::vector<ManifestRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
  std::filesystem::path base_dir_;
  std::size_t dropped_ = 0;
};

// Four-class mapping; "excited" folds into happy. Accepts the usual
// three-letter corpus codes as well.
std::optional<int> map_label(std::string_view raw);

inline constexpr std::string_view kManifestHeader =
    "utterance_id,wav_path,session,speaker_id,gender,label";

Manifest parse_manifest(std::istream& is, const std::string& source,
                        const std::filesystem::path& base_dir,
                        const ManifestOptions& options = {});
Manifest load_manifest(const std::filesystem::path& path,
                       const ManifestOptions& options = {});
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace coattn
