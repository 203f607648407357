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

#include "coattn/feature_io.hpp"

#include <fstream>
#include <stdexcept>

#include "coattn/binary_io.hpp"

namespace coattn {
namespace {

void write_grid(std::ostream& os, const char* magic, const Matrix<float>& m) {
  os.write(magic, 4);
  io::write_le(os, static_cast<std::uint32_t>(m.rows));
  io::write_le(os, static_cast<std::uint32_t>(m.cols));
  for (float v : m.values) io::write_f32(os, v);
}

Matrix<float> read_grid(std::istream& is, const char (&magic)[5],
                        const std::string& source) {
  io::expect_magic(is, magic, source);
  const auto rows = io::read_le<std::uint32_t>(is, "rows");
  const auto cols = io::read_le<std::uint32_t>(is, "cols");
  Matrix<float> m(rows, cols);
  for (float& v : m.values) v = io::read_f32(is, "values");
  return m;
}

template <typename Fn>
void save_with(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  fn(os);
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return is;
}

}  // namespace

void write_fea(std::ostream& os, const Matrix<float>& m) { write_grid(os, "FEA1", m); }

Matrix<float> read_fea(std::istream& is, const std::string& source) {
  return read_grid(is, "FEA1", source);
}

void save_fea(const std::filesystem::path& path, const Matrix<float>& m) {
  save_with(path, [&](std::ostream& os) { write_fea(os, m); });
}

Matrix<float> load_fea(const std::filesystem::path& path) {
  auto is = open_for_read(path);
  return read_fea(is, path.string());
}

void write_w2e(std::ostream& os, const Matrix<float>& m) { write_grid(os, "W2E1", m); }

Matrix<float> read_w2e(std::istream& is, const std::string& source) {
  return read_grid(is, "W2E1", source);
}

void save_w2e(const std::filesystem::path& path, const Matrix<float>& m) {
  save_with(path, [&](std::ostream& os) { write_w2e(os, m); });
}

Matrix<float> load_w2e(const std::filesystem::path& path) {
  auto is = open_for_read(path);
  return read_w2e(is, path.string());
}

std::string embedding_filename(const std::string& utterance_id,
                               std::size_t segment_index) {
  return utterance_id + ".seg" + std::to_string(segment_index) + ".w2e";
}

}  // namespace coattn
