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

#ifndef ASRLAB_CONFIG_HPP_
#define ASRLAB_CONFIG_HPP_

#include <array>
#include <string>
#include <vector>

#include "asrlab/array.hpp"

namespace asrlab {

// Output symbol inventory. Ids are positions in `symbols`.
struct Vocab {
  std::vector<std::string> symbols;
  int blank_id = -1;
  int sos_id = -1;
  int eos_id = -1;

  int64_t size() const { return static_cast<int64_t>(symbols.size()); }
  int find(const std::string& symbol) const;

  // 26 letters, "<spc>", "'", "<blank>", "<sos>", "<eos>" (31 symbols).
  static Vocab standard();
  // Minimal toy inventory: blank/sos/eos plus `n_units` single-letter symbols.
  static Vocab sized(int n_units);

  // Tokens <-> text. Words are joined with "<spc>"; encode rejects symbols
  // outside the inventory.
  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& tokens) const;
};

// Both Vocab builders put the sentinels in the last three slots; model code
// that only knows the inventory size relies on that layout.
inline int blank_of(int64_t vocab_size) { return static_cast<int>(vocab_size) - 3; }
inline int sos_of(int64_t vocab_size) { return static_cast<int>(vocab_size) - 2; }
inline int eos_of(int64_t vocab_size) { return static_cast<int>(vocab_size) - 1; }

struct BlockConfig {
  std::array<int64_t, 2> ff_dims = {2048, 2048};  // macaron first / last
  int64_t num_heads = 4;
  int64_t head_dim = 64;
  int64_t conv_kernel = 31;
  int64_t model_dim = 256;

  void validate() const;
};

struct DecoderConfig {
  int64_t num_blocks = 6;
  int64_t num_heads = 4;
  int64_t head_dim = 64;
  int64_t ff_dim = 2048;

  void validate(int64_t model_dim) const;
};

struct ModelConfig {
  int64_t feature_dim = 40;
  int64_t model_dim = 256;
  int64_t vocab_size = 31;
  int64_t rel_max_dist = 64;
  std::vector<BlockConfig> encoder_blocks;
  DecoderConfig decoder;

  void validate() const;

  // 12 encoder blocks (macaron 2048/2048, 4 heads x 64, kernel 31),
  // 6 decoder blocks, 40-dim features, 31-symbol inventory.
  static ModelConfig baseline();
  // Small config for fast tests and demos.
  static ModelConfig toy(int64_t enc_blocks = 2, int64_t model_dim = 16, int64_t ff_dim = 32,
                         int64_t num_heads = 2, int64_t conv_kernel = 3, int64_t dec_blocks = 1);
};

// JSON (de)serialization; round-trips exactly (integers only).
std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);
ModelConfig load_model_config(const std::string& path);
void save_model_config(const std::string& path, const ModelConfig& config);

}  // namespace asrlab

#endif  // ASRLAB_CONFIG_HPP_
