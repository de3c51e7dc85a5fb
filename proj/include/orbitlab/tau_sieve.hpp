#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <future>
#include <span>
#include <vector>

namespace orbitlab {

/// Divisor counts tau(n) for the half-open range [lo, hi).
///
/// Counts are 16-bit: tau(n) < 2^16 for every n below 10^15, which is far past
/// anything the sieve is asked to cover.
struct TauBlock {
  std::uint64_t lo = 1;
  std::uint64_t hi = 1;
  std::vector<std::uint16_t> counts;

  std::size_t size() const { return counts.size(); }
  bool contains(std::uint64_t n) const { return n >= lo && n < hi; }
  std::uint32_t operator[](std::uint64_t n) const { return counts[n - lo]; }
  std::span<const std::uint16_t> view() const { return counts; }
};

enum class SieveMethod {
  /// Pair-counting: each d with d^2 < n contributes 2, d^2 = n contributes 1.
  Hyperbola,
  /// Every d >= 1 adds one at each of its multiples in the block.
  Plain,
};

inline constexpr std::uint64_t kDefaultBlockSize = std::uint64_t{1} << 22;
inline constexpr std::uint64_t kMaxSieveValue = std::uint64_t{1} << 50;

struct SieveOptions {
  std::uint64_t block_size = kDefaultBlockSize;
  SieveMethod method = SieveMethod::Hyperbola;
};

/// Sieves exact divisor counts over [lo, hi). Requires 1 <= lo < hi and
/// hi - lo <= options.block_size; throws std::invalid_argument otherwise.
TauBlock sieve_block(std::uint64_t lo, std::uint64_t hi,
                     const SieveOptions& options = {});

/// Reference path: trial division against a cached prime table up to sqrt(n).
std::uint64_t divisor_count(std::int64_t n);

/// Sum of tau(n)^power over [lo, hi), streamed block by block. power in {1, 2}.
std::uint64_t tau_power_sum(std::uint64_t lo, std::uint64_t hi, int power,
                            const SieveOptions& options = {});

/// Exact sum_{n <= x} tau(n)^power.
std::uint64_t tau_moment_sum(std::uint64_t x, int power,
                             const SieveOptions& options = {});

/// Max of tau over [lo, hi); 0 for an empty range.
std::uint32_t tau_max(std::uint64_t lo, std::uint64_t hi,
                      const SieveOptions& options = {});

/// Produces consecutive blocks walking downward from `top` (exclusive) to 1.
/// With threads > 1, up to `threads` blocks below the current one are sieved
/// ahead on worker threads. Output does not depend on the thread count.
class DescendingBlockStream {
 public:
  DescendingBlockStream(std::uint64_t top, SieveOptions options,
                        unsigned threads = 1);
  ~DescendingBlockStream();

  DescendingBlockStream(const DescendingBlockStream&) = delete;
  DescendingBlockStream& operator=(const DescendingBlockStream&) = delete;
  DescendingBlockStream(DescendingBlockStream&&) = default;
  DescendingBlockStream& operator=(DescendingBlockStream&&) = default;

  bool exhausted() const { return next_hi_ <= 1 && pending_.empty(); }
  /// Next lower block; throws std::out_of_range once the stream is exhausted.
  TauBlock next();

 private:
  void refill();

  std::uint64_t next_hi_;
  SieveOptions options_;
  unsigned lookahead_;
  std::deque<std::future<TauBlock>> pending_;
};

}  // namespace orbitlab
