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

#include <filesystem>
#include <iosfwd>
#include <string>

#include "coattn/matrix.hpp"

namespace coattn {

// Feature cache: "FEA1" | u32 rows | u32 cols | row-major float32, all LE.
void write_fea(std::ostream& os, const Matrix<float>& m);
Matrix<float> read_fea(std::istream& is, const std::string& source);
void save_fea(const std::filesystem::path& path, const Matrix<float>& m);
Matrix<float> load_fea(const std::filesystem::path& path);

// Embedding sequence: "W2E1" | u32 T | u32 D | row-major float32, all LE.
void write_w2e(std::ostream& os, const Matrix<float>& m);
Matrix<float> read_w2e(std::istream& is, const std::string& source);
void save_w2e(const std::filesystem::path& path, const Matrix<float>& m);
Matrix<float> load_w2e(const std::filesystem::path& path);

// `<utterance_id>.seg<k>.w2e`
std::string embedding_filename(const std::string& utterance_id,
                               std::size_t segment_index);

}  // namespace coattn
