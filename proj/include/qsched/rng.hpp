#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace qsched {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

enum class Purpose : std::uint64_t {
  Arrival = 1,
  Service = 2,
  Decision = 3,
  Noise = 4,
  Probe = 5,
};

// Counter-based generator. A stream is identified by a 64-bit key; the state
// at draw n of counter c is a pure function of (key, c, n), so any slot can
// be regenerated independently of every other slot.
//
// Transforms are fixed and platform independent:
//   uniform(): top 53 bits of the next output times 2^-53, in [0, 1).
//   gaussian(): Marsaglia polar method on pairs of uniform() mapped to
//               (-1, 1); the second variate of each accepted pair is cached.
class CounterRng {
public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : state_(mix64(key ^ mix64(counter ^ 0xD1B54A32D192ED03ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace qsched
