// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace mfss {

/// 64-bit FNV-1a. Used for substream ids and config hashing.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Named substreams derived from the master seed.
namespace substream {
inline constexpr std::uint64_t kPhase1 = fnv1a64("phase1");
inline constexpr std::uint64_t kTrainDraw = fnv1a64("train-draw");
inline constexpr std::uint64_t kEvalDraw = fnv1a64("eval-draw");
inline constexpr std::uint64_t kGssDraw = fnv1a64("gss-draw");
inline constexpr std::uint64_t kNetInit = fnv1a64("net-init");
inline constexpr std::uint64_t kOracle = fnv1a64("oracle");
inline constexpr std::uint64_t kCvFold = fnv1a64("cv-fold");
inline constexpr std::uint64_t kTrainShuffle = fnv1a64("train-shuffle");
}  // namespace substream

/// Counter-addressable random stream.
///
/// The state for (seed, substream, index) is
///   s = mix(mix(mix(seed) ^ substream) ^ (index * 0x9E3779B97F4A7C15 + 1))
/// and the stream is SplitMix64 from that state. Uniform doubles take the top
/// 53 bits. Everything is integer arithmetic, so any implementation of the same
/// recipe replays the same draws independent of scheduling.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t substream_id, std::uint64_t index)
      : state_(splitmix64_mix(splitmix64_mix(splitmix64_mix(seed) ^ substream_id) ^
                              (index * 0x9E3779B97F4A7C15ULL + 1ULL))) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return splitmix64_mix(state_);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Unbiased uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::uint64_t state_;
};

}  // namespace mfss
