#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace hrsae {

using Rng = std::mt19937_64;

/// Deterministic generator for the stream identified by (seed, path...).
/// Distinct paths give statistically independent streams; the same path
/// always reproduces the same sequence.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * path.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto p : path) push(p);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// A fresh 64-bit seed drawn from a stream, for APIs that take a seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  Rng rng = make_stream(seed, path);
  return rng();
}

}  // namespace hrsae
