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

#include "coattn/checkpoint.hpp"

#include <fstream>
#include <limits>

#include "coattn/binary_io.hpp"

namespace coattn {

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os.write("CKPT", 4);
  io::write_le(os, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw io::FormatError("checkpoint entry name too long: " + e.name);
    }
    if (e.dims.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw io::FormatError("checkpoint entry rank too large: " + e.name);
    }
    std::size_t count = 1;
    for (auto d : e.dims) count *= d;
    if (count != e.data.size()) {
      throw io::FormatError("checkpoint entry " + e.name +
                            ": dims do not match data length");
    }
    io::write_le(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    io::write_le(os, static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) io::write_le(os, d);
    for (float v : e.data) io::write_f32(os, v);
  }
}

Checkpoint read_checkpoint(std::istream& is, const std::string& source) {
  io::expect_magic(is, "CKPT", source);
  Checkpoint ckpt;
  const auto count = io::read_le<std::uint32_t>(is, "entry count");
  ckpt.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto name_len = io::read_le<std::uint16_t>(is, "name length");
    e.name.resize(name_len);
    if (!is.read(e.name.data(), name_len)) {
      throw io::FormatError(source + ": truncated entry name");
    }
    const auto rank = io::read_le<std::uint8_t>(is, "rank");
    std::size_t n = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      e.dims.push_back(io::read_le<std::uint32_t>(is, "dims"));
      n *= e.dims.back();
    }
    e.data.resize(n);
    for (auto& v : e.data) v = io::read_f32(is, "tensor data");
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  write_checkpoint(os, ckpt);
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(is, path.string());
}

}  // namespace coattn
