// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Small deterministic hashing helpers shared by the simulator and the
// snapshot store. Output is identical on every platform.

#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace trainplan {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                              std::uint64_t h = kFnvOffset) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view text, std::uint64_t h = kFnvOffset) {
  for (char c : text) {
    h ^= static_cast<std::uint8_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Order-sensitive combination of a running digest with one more word.
constexpr std::uint64_t mix(std::uint64_t digest, std::uint64_t word) {
  return splitmix64(digest ^ splitmix64(word));
}

// Maps a 64-bit hash to a double in [0, 1).
constexpr double unit_interval(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace trainplan
