#pragma once

// Counter-based random numbers: every variate is a pure function of
// (seed, stream, index), so any sample can be regenerated independently of
// evaluation order or worker partitioning.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace demandlens {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t seed) : key_(detail::splitmix64(seed ^ 0x6A09E667F3BCC909ULL)) {}

  constexpr std::uint64_t seed_key() const { return key_; }

  // Raw 64-bit word for the given coordinates.
  constexpr std::uint64_t bits(std::uint64_t stream, std::uint64_t index, std::uint64_t lane = 0) const {
    std::uint64_t h = detail::splitmix64(key_ ^ detail::splitmix64(stream + 0x3C6EF372FE94F82BULL));
    h = detail::splitmix64(h ^ detail::splitmix64(index + 0xA54FF53A5F1D36F1ULL));
    return detail::splitmix64(h ^ (lane * 0x510E527FADE682D1ULL));
  }

  // Uniform on the open interval (0, 1): 53 random bits, offset by half an ulp.
  constexpr double uniform(std::uint64_t stream, std::uint64_t index, std::uint64_t lane = 0) const {
    return (static_cast<double>(bits(stream, index, lane) >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard Gumbel via inverse CDF.
  double gumbel(std::uint64_t stream, std::uint64_t index, std::uint64_t lane = 0) const {
    return -std::log(-std::log(uniform(stream, index, lane)));
  }

  // Standard normal via Box-Muller on two lanes derived from `lane`.
  double normal(std::uint64_t stream, std::uint64_t index, std::uint64_t lane = 0) const {
    const double u1 = uniform(stream, index, 2 * lane);
    const double u2 = uniform(stream, index, 2 * lane + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

// Named stream identifiers so independent consumers of one seed never overlap.
namespace streams {
inline constexpr std::uint64_t kDomainSample = 1;
inline constexpr std::uint64_t kPairSample = 2;
inline constexpr std::uint64_t kPerturbation = 3;
inline constexpr std::uint64_t kCombination = 4;
inline constexpr std::uint64_t kArumDraw = 5;
inline constexpr std::uint64_t kPrecheck = 6;
}  // namespace streams

}  // namespace demandlens
