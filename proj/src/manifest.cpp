// Copyright (c) 2026 asrlab authors
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

#include "asrlab/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace asrlab {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

uint64_t fnv1a64(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 14695981039346656037ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_bytes(const std::string& bytes) {
  uint64_t h = fnv1a64(bytes.data(), bytes.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("hash_file: cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return hash_bytes(os.str());
}

std::string hash_tree(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("hash_tree: not a directory: " + dir);
  std::vector<std::string> rel_paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file())
      rel_paths.push_back(fs::relative(entry.path(), dir).generic_string());
  }
  std::sort(rel_paths.begin(), rel_paths.end());
  std::string combined;
  for (const auto& rel : rel_paths) {
    combined += rel;
    combined += ':';
    combined += hash_file((fs::path(dir) / rel).string());
    combined += '\n';
  }
  return hash_bytes(combined);
}

StageRecord* ExperimentManifest::find(const std::string& stage) {
  for (auto& s : stages)
    if (s.stage == stage) return &s;
  return nullptr;
}

const StageRecord* ExperimentManifest::find(const std::string& stage) const {
  for (const auto& s : stages)
    if (s.stage == stage) return &s;
  return nullptr;
}

void ExperimentManifest::upsert(const StageRecord& record) {
  if (StageRecord* existing = find(record.stage)) {
    *existing = record;
    return;
  }
  stages.push_back(record);
}

std::string manifest_to_json(const ExperimentManifest& m) {
  ordered_json root;
  root["stages"] = ordered_json::array();
  for (const auto& s : m.stages) {
    ordered_json rec;
    rec["stage"] = s.stage;
    rec["config"] = s.config_path;
    rec["config_hash"] = s.config_hash;
    if (s.has_seed) rec["seed"] = s.seed;
    rec["inputs"] = ordered_json::object();
    for (const auto& [path, hash] : s.inputs) rec["inputs"][path] = hash;
    rec["outputs"] = ordered_json::object();
    for (const auto& [path, hash] : s.outputs) rec["outputs"][path] = hash;
    root["stages"].push_back(std::move(rec));
  }
  return root.dump(2) + "\n";
}

ExperimentManifest manifest_from_json(const std::string& text) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("manifest_from_json: ") + e.what());
  }
  if (!root.is_object() || !root.contains("stages") || !root["stages"].is_array())
    throw std::runtime_error("manifest_from_json: missing stages array");
  ExperimentManifest m;
  try {
    for (const auto& rec : root["stages"]) {
      StageRecord s;
      s.stage = rec.at("stage").get<std::string>();
      s.config_path = rec.at("config").get<std::string>();
      s.config_hash = rec.at("config_hash").get<std::string>();
      if (rec.contains("seed")) {
        s.has_seed = true;
        s.seed = rec.at("seed").get<uint64_t>();
      }
      for (const auto& [path, hash] : rec.at("inputs").items()) s.inputs[path] = hash.get<std::string>();
      for (const auto& [path, hash] : rec.at("outputs").items()) s.outputs[path] = hash.get<std::string>();
      if (m.find(s.stage)) throw std::runtime_error("manifest_from_json: duplicate stage " + s.stage);
      m.stages.push_back(std::move(s));
    }
  } catch (const ordered_json::exception& e) {
    throw std::runtime_error(std::string("manifest_from_json: ") + e.what());
  }
  return m;
}

ExperimentManifest load_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return ExperimentManifest{};
  std::ostringstream os;
  os << is.rdbuf();
  return manifest_from_json(os.str());
}

void save_manifest(const std::string& path, const ExperimentManifest& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_manifest: cannot write " + path);
  os << manifest_to_json(m);
}

}  // namespace asrlab
