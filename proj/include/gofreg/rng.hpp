#pragma once

// Random streams for the bootstrap and the simulation lab.
//
// Every stream is a xoshiro256** generator whose state is derived by hashing
// a master seed together with a list of integer keys (replication index,
// repetition index, purpose tag, ...). Streams keyed by distinct tuples are
// statistically independent for all practical purposes, so work can be
// executed in any order or on any number of threads and still reproduce
// the same draws.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace gofreg {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// xoshiro256** engine. Satisfies UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed = 0x5eed) noexcept { reseed(seed); }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  void reseed(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = detail::splitmix64(sm);
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  result_type operator()() noexcept {
    const std::uint64_t result = detail::rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  /// Uniform double on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform double on the open interval (0, 1); safe for inverse-cdf use.
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  friend bool operator==(const Stream&, const Stream&) = default;

 private:
  std::array<std::uint64_t, 4> state_{};
};

/// Purpose tags used as the first key of derived streams.
enum class StreamTag : std::uint64_t {
  bootstrap_replication = 1,
  bierens_draws = 2,
  dgp_data = 3,
  repetition_seed = 4,
};

/// Derives a 64-bit seed from a master seed and an ordered key tuple.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = master;
  std::uint64_t acc = detail::splitmix64(h);
  for (std::uint64_t key : keys) {
    std::uint64_t mix = acc ^ (key + 0x632be59bd9b4e019ULL);
    acc = detail::splitmix64(mix);
  }
  return acc;
}

inline Stream substream(std::uint64_t master, StreamTag tag,
                        std::initializer_list<std::uint64_t> keys = {}) noexcept {
  std::uint64_t seed = derive_seed(master, {static_cast<std::uint64_t>(tag)});
  for (std::uint64_t key : keys) seed = derive_seed(seed, {key});
  return Stream(seed);
}

}  // namespace gofreg
