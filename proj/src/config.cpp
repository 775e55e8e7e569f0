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

#include "asrlab/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace asrlab {

using nlohmann::json;

int Vocab::find(const std::string& symbol) const {
  for (size_t i = 0; i < symbols.size(); ++i)
    if (symbols[i] == symbol) return static_cast<int>(i);
  return -1;
}

Vocab Vocab::standard() {
  Vocab v;
  for (char c = 'a'; c <= 'z'; ++c) v.symbols.push_back(std::string(1, c));
  v.symbols.push_back("<spc>");
  v.symbols.push_back("'");
  v.symbols.push_back("<blank>");
  v.symbols.push_back("<sos>");
  v.symbols.push_back("<eos>");
  v.blank_id = v.find("<blank>");
  v.sos_id = v.find("<sos>");
  v.eos_id = v.find("<eos>");
  return v;
}

Vocab Vocab::sized(int n_units) {
  if (n_units < 1 || n_units > 26) throw std::invalid_argument("Vocab::sized: need 1..26 units");
  Vocab v;
  for (int i = 0; i < n_units; ++i) v.symbols.push_back(std::string(1, static_cast<char>('a' + i)));
  v.symbols.push_back("<blank>");
  v.symbols.push_back("<sos>");
  v.symbols.push_back("<eos>");
  v.blank_id = v.find("<blank>");
  v.sos_id = v.find("<sos>");
  v.eos_id = v.find("<eos>");
  return v;
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> out;
  for (char c : text) {
    std::string sym = c == ' ' ? "<spc>" : std::string(1, c);
    int id = find(sym);
    if (id < 0) throw std::invalid_argument("Vocab::encode: symbol '" + sym + "' not in inventory");
    out.push_back(id);
  }
  return out;
}

std::string Vocab::decode(const std::vector<int>& tokens) const {
  std::string out;
  for (int t : tokens) {
    if (t < 0 || t >= size()) throw std::invalid_argument("Vocab::decode: id out of range");
    if (t == blank_id || t == sos_id || t == eos_id) continue;
    const std::string& s = symbols[static_cast<size_t>(t)];
    out += s == "<spc>" ? " " : s;
  }
  return out;
}

void BlockConfig::validate() const {
  if (num_heads < 1 || head_dim < 1 || num_heads * head_dim != model_dim)
    throw std::invalid_argument("BlockConfig: num_heads (" + std::to_string(num_heads) + ") x head_dim (" +
                                std::to_string(head_dim) + ") must equal model_dim (" + std::to_string(model_dim) +
                                ")");
  if (conv_kernel < 1 || conv_kernel % 2 == 0)
    throw std::invalid_argument("BlockConfig: conv_kernel must be odd and >= 1, got " + std::to_string(conv_kernel));
  if (ff_dims[0] < 1 || ff_dims[1] < 1)
    throw std::invalid_argument("BlockConfig: ff_dims entries must be >= 1");
}

void DecoderConfig::validate(int64_t model_dim) const {
  if (num_blocks < 1) throw std::invalid_argument("DecoderConfig: num_blocks must be >= 1");
  if (num_heads < 1 || head_dim < 1 || num_heads * head_dim != model_dim)
    throw std::invalid_argument("DecoderConfig: num_heads x head_dim must equal model_dim");
  if (ff_dim < 1) throw std::invalid_argument("DecoderConfig: ff_dim must be >= 1");
}

void ModelConfig::validate() const {
  if (feature_dim < 4) throw std::invalid_argument("ModelConfig: feature_dim must be >= 4");
  if (model_dim < 2 || model_dim % 2 != 0)
    throw std::invalid_argument("ModelConfig: model_dim must be even and >= 2");
  if (vocab_size < 4) throw std::invalid_argument("ModelConfig: vocab_size must cover blank/sos/eos plus units");
  if (rel_max_dist < 1) throw std::invalid_argument("ModelConfig: rel_max_dist must be >= 1");
  if (encoder_blocks.empty()) throw std::invalid_argument("ModelConfig: need at least one encoder block");
  for (const auto& b : encoder_blocks) {
    if (b.model_dim != model_dim)
      throw std::invalid_argument("ModelConfig: encoder block model_dim " + std::to_string(b.model_dim) +
                                  " != model_dim " + std::to_string(model_dim));
    b.validate();
  }
  decoder.validate(model_dim);
}

ModelConfig ModelConfig::baseline() {
  ModelConfig c;
  c.encoder_blocks.assign(12, BlockConfig{});
  return c;
}

ModelConfig ModelConfig::toy(int64_t enc_blocks, int64_t model_dim, int64_t ff_dim, int64_t num_heads,
                             int64_t conv_kernel, int64_t dec_blocks) {
  ModelConfig c;
  c.feature_dim = 8;
  c.model_dim = model_dim;
  c.rel_max_dist = 8;
  BlockConfig b;
  b.ff_dims = {ff_dim, ff_dim};
  b.num_heads = num_heads;
  b.head_dim = model_dim / num_heads;
  b.conv_kernel = conv_kernel;
  b.model_dim = model_dim;
  c.encoder_blocks.assign(static_cast<size_t>(enc_blocks), b);
  c.decoder.num_blocks = dec_blocks;
  c.decoder.num_heads = num_heads;
  c.decoder.head_dim = model_dim / num_heads;
  c.decoder.ff_dim = ff_dim;
  return c;
}

namespace {

json block_to_json(const BlockConfig& b) {
  return json{{"ff_dims", {b.ff_dims[0], b.ff_dims[1]}},
              {"num_heads", b.num_heads},
              {"head_dim", b.head_dim},
              {"conv_kernel", b.conv_kernel},
              {"model_dim", b.model_dim}};
}

BlockConfig block_from_json(const json& j) {
  BlockConfig b;
  b.ff_dims = {j.at("ff_dims").at(0).get<int64_t>(), j.at("ff_dims").at(1).get<int64_t>()};
  b.num_heads = j.at("num_heads").get<int64_t>();
  b.head_dim = j.at("head_dim").get<int64_t>();
  b.conv_kernel = j.at("conv_kernel").get<int64_t>();
  b.model_dim = j.at("model_dim").get<int64_t>();
  return b;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) {
  json j;
  j["feature_dim"] = config.feature_dim;
  j["model_dim"] = config.model_dim;
  j["vocab_size"] = config.vocab_size;
  j["rel_max_dist"] = config.rel_max_dist;
  j["encoder_blocks"] = json::array();
  for (const auto& b : config.encoder_blocks) j["encoder_blocks"].push_back(block_to_json(b));
  j["decoder"] = {{"num_blocks", config.decoder.num_blocks},
                  {"num_heads", config.decoder.num_heads},
                  {"head_dim", config.decoder.head_dim},
                  {"ff_dim", config.decoder.ff_dim}};
  return j.dump(2) + "\n";
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model config: invalid JSON: ") + e.what());
  }
  try {
    ModelConfig c;
    c.feature_dim = j.at("feature_dim").get<int64_t>();
    c.model_dim = j.at("model_dim").get<int64_t>();
    c.vocab_size = j.at("vocab_size").get<int64_t>();
    c.rel_max_dist = j.at("rel_max_dist").get<int64_t>();
    c.encoder_blocks.clear();
    for (const auto& b : j.at("encoder_blocks")) c.encoder_blocks.push_back(block_from_json(b));
    const auto& d = j.at("decoder");
    c.decoder.num_blocks = d.at("num_blocks").get<int64_t>();
    c.decoder.num_heads = d.at("num_heads").get<int64_t>();
    c.decoder.head_dim = d.at("head_dim").get<int64_t>();
    c.decoder.ff_dim = d.at("ff_dim").get<int64_t>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model config: missing or mistyped field: ") + e.what());
  }
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("model config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return model_config_from_json(ss.str());
}

void save_model_config(const std::string& path, const ModelConfig& config) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("model config: cannot write '" + path + "'");
  os << model_config_to_json(config);
}

}  // namespace asrlab
