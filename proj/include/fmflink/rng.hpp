// rng.hpp — deterministic random streams.
//
// Every stochastic quantity draws from a stream derived from the run
// seed plus a structural path (channel, repetition, purpose). Streams
// are independent of evaluation order, so parallel and sequential runs
// of the same scenario produce identical numbers. All variate mappings
// are implemented here rather than taken from <random> distributions,
// whose algorithms the standard leaves unspecified.
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>

namespace fmflink {

/// SplitMix64 step; used to fold path components into stream keys.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class RandomStream {
public:
  explicit RandomStream(std::uint64_t seed) : key_(mix_root(seed)) { reseed(); }

  /// Child stream addressed by a structural path, e.g.
  /// {kTagPairs, band_index, repetition}.
  RandomStream derive(std::initializer_list<std::uint64_t> path) const {
    std::uint64_t key = key_;
    for (std::uint64_t component : path) {
      std::uint64_t state = key ^ (component * 0x9e3779b97f4a7c15ULL);
      key = splitmix64(state);
    }
    return RandomStream(key, FromKey{});
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Exponential variate with the given rate (mean 1 / rate).
  double exponential(double rate) {
    if (!(rate > 0.0))
      throw std::invalid_argument("RandomStream::exponential: rate must be > 0");
    // -log1p(-u) keeps precision near u = 0 and never hits log(0).
    return -std::log1p(-uniform()) / rate;
  }

  bool bernoulli(double probability) {
    if (probability < 0.0 || probability > 1.0)
      throw std::invalid_argument(
          "RandomStream::bernoulli: probability must lie in [0, 1]");
    return uniform() < probability;
  }

  /// Index sampled from the bucket boundaries `cumulative` (ascending,
  /// last entry is the total). Returns cumulative.size() when the draw
  /// falls beyond the last boundary, letting callers model a discard
  /// share by passing boundaries that do not reach 1.
  std::size_t categorical(std::span<const double> cumulative) {
    const double u = uniform();
    for (std::size_t i = 0; i < cumulative.size(); ++i)
      if (u < cumulative[i]) return i;
    return cumulative.size();
  }

private:
  struct FromKey {};
  RandomStream(std::uint64_t key, FromKey) : key_(key) { reseed(); }

  static std::uint64_t mix_root(std::uint64_t seed) {
    std::uint64_t state = seed;
    return splitmix64(state);
  }

  void reseed() {
    // Expand the key into the full mt19937_64 state via SplitMix64, as
    // recommended for seeding large-state generators.
    std::uint64_t state = key_;
    std::seed_seq seq{splitmix64(state), splitmix64(state), splitmix64(state),
                      splitmix64(state)};
    engine_.seed(seq);
  }

  std::uint64_t key_;
  std::mt19937_64 engine_;
};

// Stream purpose tags; combined with indices they address substreams.
inline constexpr std::uint64_t kTagPairs = 1;
inline constexpr std::uint64_t kTagHerald = 2;
inline constexpr std::uint64_t kTagRoute = 3;
inline constexpr std::uint64_t kTagPortSplit = 4;
inline constexpr std::uint64_t kTagBackground = 5;
inline constexpr std::uint64_t kTagDark = 6;

}  // namespace fmflink
