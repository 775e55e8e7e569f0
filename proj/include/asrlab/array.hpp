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

#ifndef ASRLAB_ARRAY_HPP_
#define ASRLAB_ARRAY_HPP_

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace asrlab {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? " " : "") << shape[i];
  os << "]";
  return os.str();
}

// Dense row-major float64 buffer with a shape. No autodiff state; the
// computation graph lives in Graph (tensor.hpp).
struct Array {
  Shape shape;
  std::vector<double> v;

  Array() = default;
  Array(Shape s, std::vector<double> values) : shape(std::move(s)), v(std::move(values)) {
    if (numel(shape) != static_cast<int64_t>(v.size()))
      throw std::invalid_argument("Array: shape " + shape_str(shape) + " does not match buffer size " +
                                  std::to_string(v.size()));
  }

  static Array zeros(Shape s) {
    auto n = numel(s);
    return Array(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
  }
  static Array filled(Shape s, double value) {
    auto n = numel(s);
    return Array(std::move(s), std::vector<double>(static_cast<size_t>(n), value));
  }

  int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  double& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols() + c)]; }
  int64_t size() const { return static_cast<int64_t>(v.size()); }
};

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)) without overflow; handles -inf identities.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_sum_exp(const double* x, int64_t n) {
  double m = kNegInf;
  for (int64_t i = 0; i < n; ++i) m = x[i] > m ? x[i] : m;
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

inline double log_sum_exp(const std::vector<double>& x) {
  return log_sum_exp(x.data(), static_cast<int64_t>(x.size()));
}

// One splitmix64 round; used to derive independent seed streams.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, const std::string& tag) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix_seed(a, h);
}

// Deterministic RNG. Conversions to double are done by hand so that the
// stream does not depend on the standard library's distribution objects.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // (0, 1); never returns exactly 0 (safe for log())
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  int64_t uniform_int(int64_t n) {
    if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
    return static_cast<int64_t>(eng_() % static_cast<uint64_t>(n));
  }

  double gaussian() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double gumbel() { return -std::log(-std::log(uniform_pos())); }

 private:
  std::mt19937_64 eng_;
};

// Shortest round-trip decimal representation (std::to_chars); keeps text
// artifacts byte-stable across runs.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc()) throw std::invalid_argument("parse_double: bad number '" + s + "'");
  return x;
}

}  // namespace asrlab

#endif  // ASRLAB_ARRAY_HPP_
