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

#ifndef ASRLAB_MANIFEST_HPP_
#define ASRLAB_MANIFEST_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace asrlab {

uint64_t fnv1a64(const void* data, size_t len);

// 16 lowercase hex digits of the FNV-1a hash.
std::string hash_bytes(const std::string& bytes);
std::string hash_file(const std::string& path);
// Combined hash over every regular file under dir: the file hashes keyed by
// sorted relative path, hashed again. Stable across traversal order.
std::string hash_tree(const std::string& dir);

struct StageRecord {
  std::string stage;  // e.g. "pretrain/base"
  std::string config_path;
  std::string config_hash;
  bool has_seed = false;
  uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // exp-relative path -> hash
  std::map<std::string, std::string> outputs;  // exp-relative path -> hash
};

// One record per stage key; re-running a stage replaces its record in place,
// so an unchanged re-run leaves the serialized manifest byte-identical.
struct ExperimentManifest {
  std::vector<StageRecord> stages;

  StageRecord* find(const std::string& stage);
  const StageRecord* find(const std::string& stage) const;
  void upsert(const StageRecord& record);
};

std::string manifest_to_json(const ExperimentManifest& m);
ExperimentManifest manifest_from_json(const std::string& text);

// load returns an empty manifest when the file does not exist yet.
ExperimentManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const ExperimentManifest& m);

}  // namespace asrlab

#endif  // ASRLAB_MANIFEST_HPP_
