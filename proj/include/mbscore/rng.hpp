#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace mbs {

/// Counter-based random numbers: every draw is a pure function of
/// (seed, stream, counter), so ensembles do not depend on evaluation order.
class CounterRng {
 public:
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t bits(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    return mix(mix(mix(seed) ^ (stream * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL)) ^ counter);
  }

  /// Uniform in the open interval (0, 1).
  static double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    return (static_cast<double>(bits(seed, stream, counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal; counters 2j and 2j+1 share one Box-Muller pair.
  static double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    const std::uint64_t pair = counter >> 1;
    const double u1 = uniform(seed, stream, 2 * pair);
    const double u2 = uniform(seed, stream, 2 * pair + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    return (counter & 1) ? r * std::sin(a) : r * std::cos(a);
  }

  /// Fills out[i] = normal(seed, stream, offset + i). Same values as calling
  /// normal() element by element, at half the cost.
  static void fill_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t offset,
                          std::span<double> out) {
    std::size_t i = 0;
    if ((offset & 1) && !out.empty()) out[i++] = normal(seed, stream, offset);
    for (; i + 1 < out.size(); i += 2) {
      const std::uint64_t c = offset + i;
      const double u1 = uniform(seed, stream, c);
      const double u2 = uniform(seed, stream, c + 1);
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double a = 2.0 * std::numbers::pi * u2;
      out[i] = r * std::cos(a);
      out[i + 1] = r * std::sin(a);
    }
    if (i < out.size()) out[i] = normal(seed, stream, offset + i);
  }
};

/// Sequential view over one counter-based stream.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  double uniform() { return CounterRng::uniform(seed_, stream_, counter_++); }
  double normal() { return CounterRng::normal(seed_, stream_, counter_++); }
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

/// Stream domains keep unrelated consumers of one seed apart.
namespace rng_domain {
inline constexpr std::uint64_t kBrownian = 0x100000000ULL;
inline constexpr std::uint64_t kInitial = 0x200000000ULL;
inline constexpr std::uint64_t kDataset = 0x300000000ULL;
inline constexpr std::uint64_t kSampler = 0x400000000ULL;
inline constexpr std::uint64_t kTraining = 0x500000000ULL;
inline constexpr std::uint64_t kMetrics = 0x600000000ULL;
inline constexpr std::uint64_t kBootstrap = 0x700000000ULL;
}  // namespace rng_domain

}  // namespace mbs
