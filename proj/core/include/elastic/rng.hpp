#pragma once

#include <cmath>
#include <cstdint>

namespace elastic {

// PCG32: small, fast, reproducible across platforms, and its full state is
// two u64 words so checkpoints can serialize it exactly. Distinct stream ids
// give statistically independent substreams of the same seed (init, data
// generation, shuffling, augmentation).
class Pcg32 {
 public:
  Pcg32() : Pcg32(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL) {}
  Pcg32(std::uint64_t seed, std::uint64_t stream) { reseed(seed, stream); }

  void reseed(std::uint64_t seed, std::uint64_t stream) {
    state_ = 0u;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    std::uint32_t xorshifted =
        static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u32()) * (1.0 / 4294967296.0);
  }

  float next_float() { return static_cast<float>(next_double()); }

  // Uniform integer in [0, bound) without modulo bias.
  std::uint32_t next_below(std::uint32_t bound) {
    std::uint32_t threshold = (-bound) % bound;
    for (;;) {
      std::uint32_t r = next_u32();
      if (r >= threshold) return r % bound;
    }
  }

  // Standard normal via Box-Muller. Stateless on purpose: no cached spare,
  // so serialized state is just (state, inc) and replay is exact.
  double next_gaussian() {
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::uint64_t state() const { return state_; }
  std::uint64_t inc() const { return inc_; }
  void restore(std::uint64_t state, std::uint64_t inc) {
    state_ = state;
    inc_ = inc;
  }

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
};

// Fixed substream ids so every consumer draws from its own sequence.
namespace rng_stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kDataGen = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kAugment = 4;
inline constexpr std::uint64_t kProbe = 5;
}  // namespace rng_stream

}  // namespace elastic
