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

#include "coattn/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace coattn {
namespace {

std::string trim(std::string_view s) {
  const auto* b = s.begin();
  const auto* e = s.end();
  while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e != b && std::isspace(static_cast<unsigned char>(e[-1]))) --e;
  return std::string(b, e);
}

// Comma-separated fields; double quotes may wrap a field and "" escapes a
// quote inside one.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

ManifestError::ManifestError(const std::string& source, std::size_t line,
                             const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
      line_(line) {}

Manifest::Manifest(std::vector<ManifestRecord> records, std::filesystem::path base_dir)
    : records_(std::move(records)), base_dir_(std::move(base_dir)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!index_.emplace(records_[i].utterance_id, i).second) {
      throw std::invalid_argument("duplicate utterance id: " + records_[i].utterance_id);
    }
  }
}

const ManifestRecord& Manifest::at(const std::string& utterance_id) const {
  const auto it = index_.find(utterance_id);
  if (it == index_.end()) {
    throw std::out_of_range("unknown utterance id: " + utterance_id);
  }
  return records_[it->second];
}

bool Manifest::contains(const std::string& utterance_id) const {
  return index_.count(utterance_id) != 0;
}

std::filesystem::path Manifest::resolve(const ManifestRecord& record) const {
  if (record.wav_path.is_absolute() || base_dir_.empty()) return record.wav_path;
  return base_dir_ / record.wav_path;
}

std::optional<int> map_label(std::string_view raw) {
  const std::string s = lower(raw);
  if (s == "angry" || s == "ang" || s == "anger") return 0;
  if (s == "sad" || s == "sadness") return 1;
  if (s == "happy" || s == "hap" || s == "happiness" || s == "excited" || s == "exc") {
    return 2;
  }
  if (s == "neutral" || s == "neu") return 3;
  return std::nullopt;
}

Manifest parse_manifest(std::istream& is, const std::string& source,
                        const std::filesystem::path& base_dir,
                        const ManifestOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  // Header, skipping blank lines and a UTF-8 byte order mark.
  while (std::getline(is, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw ManifestError(source, line_no, "empty manifest");
  {
    auto header = split_csv(line);
    for (auto& h : header) h = lower(h);
    if (header != split_csv(std::string(kManifestHeader))) {
      throw ManifestError(source, line_no,
                          "expected header '" + std::string(kManifestHeader) + "'");
    }
  }

  std::vector<ManifestRecord> records;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t dropped = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6) {
      throw ManifestError(source, line_no,
                          "expected 6 fields, got " + std::to_string(f.size()));
    }
    ManifestRecord r;
    r.utterance_id = f[0];
    r.wav_path = f[1];
    r.speaker_id = f[3];
    r.gender = f[4];
    r.raw_label = f[5];
    if (r.utterance_id.empty()) throw ManifestError(source, line_no, "empty utterance_id");
    if (r.wav_path.empty()) throw ManifestError(source, line_no, "empty wav_path");
    if (r.speaker_id.empty()) throw ManifestError(source, line_no, "empty speaker_id");
    try {
      std::size_t used = 0;
      r.session = std::stoi(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ManifestError(source, line_no, "session is not an integer: '" + f[2] + "'");
    }
    if (r.session < 1 || r.session > 5) {
      throw ManifestError(source, line_no,
                          "session out of range 1..5: " + std::to_string(r.session));
    }
    const auto label = map_label(r.raw_label);
    if (!label) {
      if (options.drop_unknown_labels) {
        ++dropped;
        continue;
      }
      throw ManifestError(source, line_no, "unknown label '" + r.raw_label + "'");
    }
    r.label = *label;
    if (const auto [it, fresh] = seen.emplace(r.utterance_id, line_no); !fresh) {
      throw ManifestError(source, line_no,
                          "duplicate utterance id '" + r.utterance_id +
                              "' (first on line " + std::to_string(it->second) + ")");
    }
    records.push_back(std::move(r));
  }
  Manifest m(std::move(records), base_dir);
  m.set_dropped(dropped);
  return m;
}

Manifest load_manifest(const std::filesystem::path& path,
                       const ManifestOptions& options) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest " + path.string());
  return parse_manifest(is, path.string(), path.parent_path(), options);
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ostringstream os;
  os << kManifestHeader << '\n';
  for (const auto& r : manifest.records()) {
    os << csv_field(r.utterance_id) << ',' << csv_field(r.wav_path.generic_string())
       << ',' << r.session << ',' << csv_field(r.speaker_id) << ','
       << csv_field(r.gender) << ',' << csv_field(r.raw_label) << '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << os.str();
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

}  // namespace coattn
