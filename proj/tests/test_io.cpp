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

#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>

#include "coattn/checkpoint.hpp"
#include "coattn/feature_io.hpp"
#include "coattn/rng.hpp"
#include "doctest.h"

using namespace coattn;

namespace {

Matrix<float> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix<float> m(r, c);
  for (float& v : m.values) v = static_cast<float>(rng.normal());
  return m;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("FEA round trip and layout") {
    const auto m = random_matrix(94, 40, 1);
    std::stringstream ss;
    write_fea(ss, m);
    const std::string bytes = ss.str();
    CHECK(bytes.size() == 12 + 94 * 40 * 4);
    CHECK(bytes.substr(0, 4) == "FEA1");
    CHECK(static_cast<unsigned char>(bytes[4]) == 94);
    CHECK(static_cast<unsigned char>(bytes[8]) == 40);
    CHECK(read_fea(ss, "mem") == m);
  }

  TEST_CASE("W2E round trip through a file") {
    const auto m = random_matrix(149, 768, 2);
    const auto path = std::filesystem::temp_directory_path() / "coattn_io_test.w2e";
    save_w2e(path, m);
    CHECK(load_w2e(path) == m);
    std::filesystem::remove(path);
    CHECK(embedding_filename("Ses01F_u001", 2) == "Ses01F_u001.seg2.w2e");
  }

  TEST_CASE("bad magic and truncation are rejected") {
    std::stringstream fea;
    write_fea(fea, random_matrix(2, 2, 3));
    CHECK_THROWS(read_w2e(fea, "wrong"));
    std::stringstream trunc(fea.str().substr(0, 14));
    CHECK_THROWS(read_fea(trunc, "trunc"));
    std::stringstream junk("CKPX\x01\x00\x00\x00");
    CHECK_THROWS(read_checkpoint(junk, "junk"));
    CHECK_THROWS_AS(load_fea("/nonexistent/x.fea"), std::runtime_error);
  }

  TEST_CASE("checkpoint round trip") {
    Checkpoint ck;
    ck.entries.push_back({"a.weight", {3, 2}, {1, 2, 3, 4, 5, 6}});
    ck.entries.push_back({"a.bias", {3}, {0.5f, -0.5f, 0.0f}});
    ck.entries.push_back({"scalar", {}, {7.0f}});
    std::stringstream ss;
    write_checkpoint(ss, ck);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 4) == "CKPT");
    const auto back = read_checkpoint(ss, "mem");
    CHECK(back == ck);
    REQUIRE(back.find("a.bias") != nullptr);
    CHECK(back.find("a.bias")->dims == std::vector<std::uint32_t>{3});
    CHECK(back.find("missing") == nullptr);

    Checkpoint bad;
    bad.entries.push_back({"x", {2, 2}, {1, 2, 3}});
    std::stringstream out;
    CHECK_THROWS(write_checkpoint(out, bad));
  }
}
