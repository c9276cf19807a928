#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace tinyids {

/// Pinned 64-bit generator (xoshiro256** seeded through splitmix64).
///
/// Every randomized step in the toolkit draws from this type instead of the
/// <random> distributions, whose output is implementation-defined. Streams are
/// derived by seeding with `seed + stream_index`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform integer in [0, bound); bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound);
  // Uniform real in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  // Standard normal via Box-Muller.
  double normal();
  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace tinyids
