// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace evomerge {

// SplitMix64 (Steele, Lea, Vigna). Used for all elementwise random streams so
// that results are reproducible across platforms and standard-library versions.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

/// Derives stream `index` from a run seed. Defined as the SplitMix64 output
/// for state seed + (index + 1) * golden-ratio increment; documented so other
/// implementations of the file formats can reproduce DARE masks exactly.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  return SplitMix64(seed + (index + 1) * 0x9e3779b97f4a7c15ULL).next_u64();
}

}  // namespace evomerge
