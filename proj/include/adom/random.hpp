#pragma once

#include <cstdint>

namespace adom {

// Counter-based generator: every draw is a pure function of (seed, stream,
// index, lane), so results do not depend on draw order or platform.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t bits(std::uint64_t stream, std::uint64_t index, std::uint64_t lane = 0) const;

  // Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t stream, std::uint64_t index, std::uint64_t lane = 0) const;

  // Standard normal via Box-Muller over two keyed uniforms.
  double normal(std::uint64_t stream, std::uint64_t index, std::uint64_t lane = 0) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace adom
