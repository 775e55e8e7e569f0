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

#ifndef ASRLAB_CHECKPOINT_HPP_
#define ASRLAB_CHECKPOINT_HPP_

#include <string>

#include "asrlab/tensor.hpp"

namespace asrlab {

// Binary parameter snapshot. Little-endian, magic "ASRLCKP1", then
//   uint64 param count
//   per param: uint32 name length, name bytes, uint32 ndim,
//              int64 per dim, float64 per element (bit-exact).
// Load restores names, shapes, values and insertion order; gradients are
// not stored.
void save_checkpoint(const std::string& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::string& path);

}  // namespace asrlab

#endif  // ASRLAB_CHECKPOINT_HPP_
