// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace trivol {

// SplitMix64 step; used for seed expansion and for deriving independent
// streams from (seed, tag, index) tuples so that draw order never depends
// on thread scheduling or on how many draws another stream consumed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b * 0xff51afd7ed558ccdULL + 0x9e3779b97f4a7c15ULL);
  return splitmix64(s);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                              std::uint64_t d) {
  return mix_seed(mix_seed(a, b, c), d);
}

// Deterministic RNG with explicit distribution code (standard-library
// distributions are implementation-defined, which would break byte-level
// reproducibility of checkpoints across toolchains).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : eng_() % n; }

  // Box-Muller; consumes exactly two engine draws per sample.
  double normal(double mean, double sd) {
    const double u1 = static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 eng_;
};

// Stream tags for deriving purpose-specific RNGs from the master seed.
namespace rng_stream {
constexpr std::uint64_t kTriplaneInit = 0x7470u;   // triplane G1 init
constexpr std::uint64_t kDecoderInit = 0x6463u;    // decoder weights
constexpr std::uint64_t kViewChoice = 0x7663u;     // canonical/novel draw
constexpr std::uint64_t kNovelPose = 0x6e70u;      // novel pose sampling
constexpr std::uint64_t kPatch = 0x7061u;          // canonical patch origin
constexpr std::uint64_t kRayJitter = 0x726au;      // stratified depth jitter
constexpr std::uint64_t kEvalPose = 0x6570u;       // evaluation pose batch
constexpr std::uint64_t kFeatureNet = 0x666eu;     // toy feature extractor
constexpr std::uint64_t kEmbedder = 0x656du;       // toy embedder projection
}  // namespace rng_stream

}  // namespace trivol
