#include "sdoed/rng.hpp"

#include <cmath>

#include "sdoed/errors.hpp"

namespace sdoed {

namespace {

// SplitMix64 finalizer; full-period mixing of a 64-bit word.
std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t CounterRng::bits_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ (stream * 0xda942042e4dd58b5ULL));
  h = splitmix(h ^ (counter * 0xca01f9dd51b143dfULL));
  return h;
}

std::uint64_t CounterRng::mix_streams(std::uint64_t a, std::uint64_t b) {
  return splitmix(a * 0x2545f4914f6cdd1dULL + b + 1);
}

double CounterRng::next_normal() {
  // Box-Muller; u1 bounded away from zero so log() is finite.
  double u1 = next_double();
  double u2 = next_double();
  if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t CounterRng::next_below(std::uint64_t n) {
  if (n == 0) throw ContractViolation("CounterRng::next_below: n must be positive");
  // Rejection sampling for an unbiased result.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = next_bits();
  while (v >= limit) v = next_bits();
  return v % n;
}

}  // namespace sdoed
