#pragma once

#include <cstdint>
#include <random>

#include "barter/rational.hpp"

namespace barter {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Seed for trial t of a batch; stable so parallel and serial runs agree.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t t) {
  return splitmix64(base ^ splitmix64(t + 0x51ED270B));
}

// True with probability p for p in [0,1]: compares a uniform 64-bit draw
// against floor(p * 2^64). Bias is below 2^-64.
inline bool bernoulli_exact(const Rat& p, std::uint64_t u) {
  if (p <= 0) return false;
  if (p >= 1) return true;
  BigInt threshold = (numerator(p) << 64) / denominator(p);
  return BigInt(u) < threshold;
}

inline bool bernoulli_exact(const Rat& p, std::mt19937_64& rng) {
  return bernoulli_exact(p, static_cast<std::uint64_t>(rng()));
}

}  // namespace barter
