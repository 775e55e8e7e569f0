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

#ifndef ASRLAB_BYTES_HPP_
#define ASRLAB_BYTES_HPP_

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

namespace asrlab {

// Little-endian scalar I/O, independent of host byte order.

inline void put_u32(std::ostream& os, uint32_t x) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, uint64_t x) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void put_f64(std::ostream& os, double x) {
  uint64_t bits;
  std::memcpy(&bits, &x, 8);
  put_u64(os, bits);
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<uint32_t>(b[i]) << (8 * i);
  return x;
}

inline uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<uint64_t>(b[i]) << (8 * i);
  return x;
}

inline double get_f64(std::istream& is) {
  uint64_t bits = get_u64(is);
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}

}  // namespace asrlab

#endif  // ASRLAB_BYTES_HPP_
