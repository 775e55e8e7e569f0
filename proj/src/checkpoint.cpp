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

#include "asrlab/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "asrlab/bytes.hpp"

namespace asrlab {

namespace {

constexpr char kMagic[8] = {'A', 'S', 'R', 'L', 'C', 'K', 'P', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const ParameterSet& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
  os.write(kMagic, 8);
  put_u64(os, params.items().size());
  for (const auto& p : params.items()) {
    put_u32(os, static_cast<uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(os, static_cast<uint32_t>(p->shape.size()));
    for (int64_t d : p->shape) put_u64(os, static_cast<uint64_t>(d));
    for (double v : p->value) put_f64(os, v);
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

ParameterSet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: '" + path + "' is not a parameter snapshot");
  uint64_t count = get_u64(is);
  ParameterSet out;
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint32_t ndim = get_u32(is);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int64_t>(get_u64(is));
    int64_t n = numel(shape);
    std::vector<double> value(static_cast<size_t>(n));
    for (auto& v : value) v = get_f64(is);
    if (!is) throw std::runtime_error("load_checkpoint: truncated file '" + path + "'");
    out.add(name, std::move(shape), std::move(value));
  }
  return out;
}

}  // namespace asrlab
