#pragma once

#include <cstdint>
#include <limits>

namespace drma {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the k-th output is a bijective mix of
/// (key + k * golden). Any output can be computed without the previous ones,
/// and distinct keys give decorrelated streams. Satisfies
/// UniformRandomBitGenerator so it plugs into <random> distributions.
class counter_rng {
public:
  using result_type = std::uint64_t;

  explicit counter_rng(std::uint64_t key = 0, std::uint64_t counter = 0) noexcept
      : key_(splitmix64_mix(key)), counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    return splitmix64_mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL);
  }

  std::uint64_t counter() const noexcept { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

/// Stream identifiers used when splitting a master seed.
enum class stream_tag : std::uint64_t { data = 1, bootstrap = 2, aux = 3 };

/// Derive the seed of sub-stream `index` (tagged by purpose) from a master
/// seed. Depends only on its arguments, never on scheduling.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                           stream_tag tag = stream_tag::data) noexcept {
  std::uint64_t h = splitmix64_mix(master ^ 0x6a09e667f3bcc909ULL);
  h = splitmix64_mix(h + splitmix64_mix(index + 0x9e3779b97f4a7c15ULL));
  return splitmix64_mix(h ^ (static_cast<std::uint64_t>(tag) * 0xd1b54a32d192ed03ULL));
}

} // namespace drma
