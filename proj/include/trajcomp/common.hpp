// Copyright 2026 The trajcomp Authors
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

#ifndef TRAJCOMP_COMMON_HPP_
#define TRAJCOMP_COMMON_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajcomp {

// All recoverable failures surface as trajcomp::Error with a message that
// names the offending object (node, tensor, term index, file path).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

// Deterministic RNG used everywhere; never seed from entropy sources.
using Rng = std::mt19937_64;

inline float normal_sample(Rng& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  return n(rng);
}

inline float uniform_sample(Rng& rng, float lo, float hi) {
  std::uniform_real_distribution<float> u(lo, hi);
  return u(rng);
}

// FNV-1a, used for config fingerprints.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline bool all_finite(const std::vector<float>& v) {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace trajcomp

#endif  // TRAJCOMP_COMMON_HPP_
