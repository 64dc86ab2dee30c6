#pragma once

#include <cstdint>
#include <string_view>

namespace invnet {

/// xoshiro256** seeded through splitmix64. Streams are identical on every
/// platform because all conversions to floating point are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  /// Uniform integer on [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) noexcept;
  /// Standard normal via Box-Muller.
  double normal() noexcept;

  /// Independent generator for a named consumer (init, shuffle, dropout, ...).
  Rng derive(std::string_view stream) const noexcept;
  Rng derive(std::uint64_t stream) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

}  // namespace invnet
