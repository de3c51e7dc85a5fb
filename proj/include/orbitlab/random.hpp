#pragma once

#include <cstdint>
#include <limits>

namespace orbitlab {

/// SplitMix64 (Steele, Lea, Flood 2014). Chosen because the output sequence is
/// fully specified by a few lines of integer arithmetic, so sampled
/// experiments replay identically on any platform.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, bound) by rejection; bound >= 1. std::uniform_int_distribution
  /// is not used because its algorithm differs between standard libraries.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t v;
    do {
      v = (*this)();
    } while (v >= limit);
    return v % bound;
  }

 private:
  std::uint64_t state_;
};

/// Seed for stream `index` of a run with master seed `master`; independent of
/// the order in which streams are consumed.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return SplitMix64::mix(master ^ SplitMix64::mix(index + 0x632BE59BD9B4E019ull));
}

}  // namespace orbitlab
