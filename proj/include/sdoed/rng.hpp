#ifndef SDOED_RNG_HPP
#define SDOED_RNG_HPP

#include <cstdint>

namespace sdoed {

// Splittable counter-based generator. Every draw is a pure function of
// (seed, stream, counter), so results are independent of evaluation order and
// identical across platforms. Streams separate independent uses of the same
// seed (random designs vs. truth-model coefficients, etc.).
class CounterRng {
public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream), counter_(0) {}

  // Stateless access: value for an explicit counter.
  static std::uint64_t bits_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

  std::uint64_t next_bits() { return bits_at(seed_, stream_, counter_++); }

  // Uniform on [0, 1) with 53-bit resolution.
  double next_double() { return static_cast<double>(next_bits() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller (consumes two draws).
  double next_normal();

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t next_below(std::uint64_t n);

  CounterRng split(std::uint64_t substream) const {
    return CounterRng(seed_, mix_streams(stream_, substream));
  }

private:
  static std::uint64_t mix_streams(std::uint64_t a, std::uint64_t b);

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_;
};

}  // namespace sdoed

#endif
