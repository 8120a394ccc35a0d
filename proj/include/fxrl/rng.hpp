#pragma once

#include <cstdint>
#include <random>

namespace fxrl {

using Rng = std::mt19937_64;

// Fixed-order substreams fanned out from the master seed. Adding a stream
// appends to the end; existing indices never move.
enum class Stream : std::uint64_t {
  data_gen = 0,
  env = 1,
  agent_init = 2,
  exploration = 3,
  replay = 4,
};

std::uint64_t splitmix64(std::uint64_t& state);

// Seed for one substream: independent of how many draws other streams make.
std::uint64_t derive_seed(std::uint64_t master, Stream stream);

struct SeedStreams {
  Rng data_gen;
  Rng env;
  Rng agent_init;
  Rng exploration;
  Rng replay;
};

SeedStreams seed_all(std::uint64_t master);

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n); n must be > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

double standard_normal(Rng& rng);

}  // namespace fxrl
