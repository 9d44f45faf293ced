#include "adom/random.hpp"

#include <cmath>
#include <numbers>

namespace adom {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t CounterRng::bits(std::uint64_t stream, std::uint64_t index, std::uint64_t lane) const {
  std::uint64_t h = splitmix64(seed_);
  h = splitmix64(h ^ stream);
  h = splitmix64(h ^ index);
  return splitmix64(h ^ lane);
}

double CounterRng::uniform(std::uint64_t stream, std::uint64_t index, std::uint64_t lane) const {
  return static_cast<double>(bits(stream, index, lane) >> 11) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t stream, std::uint64_t index, std::uint64_t lane) const {
  // lanes 2*lane and 2*lane+1 feed one Box-Muller pair; only the cosine branch is used
  const double u1 = 1.0 - uniform(stream, index, 2 * lane);  // (0, 1]
  const double u2 = uniform(stream, index, 2 * lane + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace adom
