#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace kgrec {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream seed for (root, tag...), e.g. derive_seed(seed, {kStreamStep, step}).
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = mix_seed(root);
  for (auto t : tags) s = mix_seed(s ^ mix_seed(t));
  return s;
}

inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(root, tags));
}

// Uniform double in the open interval (0, 1) from 53 random bits.
inline double uniform_open01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

// Uniform integer in [0, n) by rejection (portable across standard libraries).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

enum StreamTag : std::uint64_t {
  kStreamInit = 1,
  kStreamStep = 2,
  kStreamGumbel = 3,
  kStreamDropout = 4,
  kStreamBatch = 5,
  kStreamContrast = 6,
  kStreamEval = 7,
  kStreamSplit = 8,
  kStreamToy = 9,
  kStreamSubsample = 10,
};

}  // namespace kgrec
