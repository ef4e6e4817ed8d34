// Copyright 2026 The fedsim Authors. All Rights Reserved.
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

#ifndef FEDSIM_RNG_HPP_
#define FEDSIM_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace fedsim {

// SplitMix64 finalizer. Statistically strong enough for simulation; not
// cryptographic.
inline std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based random stream. The n-th output is a pure function of
// (key, n), so streams keyed by (seed, round, client, purpose) give results
// independent of scheduling and parallelism.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : key_(key) {}

  // Derives a key by folding an ordered list of parts into the state.
  static RngStream keyed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t k = 0x8f1bbcdcbfa53e0bULL;
    for (std::uint64_t p : parts) k = splitmix64(k ^ p);
    return RngStream(k);
  }

  std::uint64_t next_u64() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_)); }

  // Uniform on [0, 1), 53 significant bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double next_double_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller (no cached spare: two uniforms per draw,
  // so the stream position stays a simple function of the draw count).
  double next_gaussian();

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace fedsim

#endif  // FEDSIM_RNG_HPP_
