#include "fxrl/rng.hpp"

#include <cmath>
#include <numbers>

namespace fxrl {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, Stream stream) {
  std::uint64_t state = master;
  std::uint64_t out = 0;
  for (std::uint64_t i = 0; i <= static_cast<std::uint64_t>(stream); ++i) {
    out = splitmix64(state);
  }
  return out;
}

SeedStreams seed_all(std::uint64_t master) {
  return SeedStreams{
      Rng(derive_seed(master, Stream::data_gen)),
      Rng(derive_seed(master, Stream::env)),
      Rng(derive_seed(master, Stream::agent_init)),
      Rng(derive_seed(master, Stream::exploration)),
      Rng(derive_seed(master, Stream::replay)),
  };
}

// Box-Muller; one draw per call keeps the stream position easy to reason about.
double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace fxrl
