// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace asd {

// xorshift64* generator. This is the bit-exact PRNG behind init_random and
// the synthetic-stream generators: state seeded directly (0 is remapped to a
// fixed nonzero constant), next() applies the 12/25/27 shift triple and the
// 0x2545F4914F6CDD1D multiply; uniform() keeps the top 24 bits.
class Xorshift64Star {
 public:
  explicit Xorshift64Star(std::uint64_t seed)
      : state_(seed != 0 ? seed : 0x9E3779B97F4A7C15ull) {}

  std::uint64_t next() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1Dull;
  }

  // Uniform in [0, 1).
  float uniform() { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }

  // Uniform in [lo, hi).
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Uniform byte.
  std::uint8_t byte() { return static_cast<std::uint8_t>(next() >> 56); }

 private:
  std::uint64_t state_;
};

}  // namespace asd
