#include "orbitlab/tau_sieve.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

namespace orbitlab {

namespace {

std::uint64_t isqrt(std::uint64_t n) {
  auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

void sieve_hyperbola(std::uint64_t lo, std::uint64_t hi,
                     std::vector<std::uint16_t>& counts) {
  std::uint16_t* out = counts.data();
  const std::uint64_t dmax = isqrt(hi - 1);
  for (std::uint64_t d = 1; d <= dmax; ++d) {
    const std::uint64_t square = d * d;
    std::uint64_t m = std::max(square, (lo + d - 1) / d * d);
    if (m == square) {
      out[m - lo] += 1;
      m += d;
    }
    for (; m < hi; m += d) out[m - lo] += 2;
  }
}

void sieve_plain(std::uint64_t lo, std::uint64_t hi,
                 std::vector<std::uint16_t>& counts) {
  std::uint16_t* out = counts.data();
  for (std::uint64_t d = 1; d < hi; ++d) {
    for (std::uint64_t m = (lo + d - 1) / d * d; m < hi; m += d) out[m - lo] += 1;
  }
}

class PrimeTable {
 public:
  // Primes up to at least `limit`.
  std::shared_ptr<const std::vector<std::uint32_t>> upto(std::uint64_t limit) {
    std::lock_guard lock(mutex_);
    if (limit > covered_) grow(std::max<std::uint64_t>(limit, 2 * covered_));
    return primes_;
  }

 private:
  void grow(std::uint64_t limit) {
    std::vector<bool> composite(limit + 1, false);
    auto primes = std::make_shared<std::vector<std::uint32_t>>();
    for (std::uint64_t i = 2; i <= limit; ++i) {
      if (composite[i]) continue;
      primes->push_back(static_cast<std::uint32_t>(i));
      for (std::uint64_t j = i * i; j <= limit; j += i) composite[j] = true;
    }
    primes_ = std::move(primes);
    covered_ = limit;
  }

  std::mutex mutex_;
  std::uint64_t covered_ = 1;
  std::shared_ptr<const std::vector<std::uint32_t>> primes_ =
      std::make_shared<std::vector<std::uint32_t>>();
};

PrimeTable& prime_table() {
  static PrimeTable table;
  return table;
}

}  // namespace

TauBlock sieve_block(std::uint64_t lo, std::uint64_t hi,
                     const SieveOptions& options) {
  if (lo < 1 || hi <= lo) {
    throw std::invalid_argument("sieve_block: need 1 <= lo < hi, got [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + ")");
  }
  if (hi - lo > options.block_size) {
    throw std::invalid_argument("sieve_block: range length " + std::to_string(hi - lo) +
                                " exceeds block size " +
                                std::to_string(options.block_size));
  }
  if (hi > kMaxSieveValue) {
    throw std::invalid_argument("sieve_block: hi beyond 16-bit count range");
  }
  TauBlock block{lo, hi, std::vector<std::uint16_t>(hi - lo, 0)};
  if (options.method == SieveMethod::Plain) {
    sieve_plain(lo, hi, block.counts);
  } else {
    sieve_hyperbola(lo, hi, block.counts);
  }
  return block;
}

std::uint64_t divisor_count(std::int64_t n) {
  if (n <= 0) {
    throw std::invalid_argument("divisor_count: n must be positive, got " +
                                std::to_string(n));
  }
  auto rest = static_cast<std::uint64_t>(n);
  const auto primes = prime_table().upto(isqrt(rest));
  std::uint64_t count = 1;
  for (std::uint64_t p : *primes) {
    if (p * p > rest) break;
    std::uint64_t exponent = 0;
    while (rest % p == 0) {
      rest /= p;
      ++exponent;
    }
    count *= exponent + 1;
  }
  if (rest > 1) count *= 2;
  return count;
}

std::uint64_t tau_power_sum(std::uint64_t lo, std::uint64_t hi, int power,
                            const SieveOptions& options) {
  if (power != 1 && power != 2) {
    throw std::invalid_argument("tau_power_sum: power must be 1 or 2");
  }
  lo = std::max<std::uint64_t>(lo, 1);
  std::uint64_t total = 0;
  for (std::uint64_t start = lo; start < hi; start += options.block_size) {
    const auto block = sieve_block(start, std::min(hi, start + options.block_size), options);
    for (std::uint64_t t : block.counts) total += power == 1 ? t : t * t;
  }
  return total;
}

std::uint64_t tau_moment_sum(std::uint64_t x, int power, const SieveOptions& options) {
  if (x < 1) throw std::invalid_argument("tau_moment_sum: x must be >= 1");
  return tau_power_sum(1, x + 1, power, options);
}

std::uint32_t tau_max(std::uint64_t lo, std::uint64_t hi, const SieveOptions& options) {
  lo = std::max<std::uint64_t>(lo, 1);
  std::uint32_t best = 0;
  for (std::uint64_t start = lo; start < hi; start += options.block_size) {
    const auto block = sieve_block(start, std::min(hi, start + options.block_size), options);
    best = std::max<std::uint32_t>(best, *std::ranges::max_element(block.counts));
  }
  return best;
}

DescendingBlockStream::DescendingBlockStream(std::uint64_t top, SieveOptions options,
                                             unsigned threads)
    : next_hi_(top), options_(options), lookahead_(std::max(1u, threads)) {
  if (options_.block_size == 0) {
    throw std::invalid_argument("DescendingBlockStream: block size must be positive");
  }
}

DescendingBlockStream::~DescendingBlockStream() {
  for (auto& f : pending_) {
    if (f.valid()) f.wait();
  }
}

void DescendingBlockStream::refill() {
  while (pending_.size() < lookahead_ && next_hi_ > 1) {
    const std::uint64_t hi = next_hi_;
    const std::uint64_t lo = hi > options_.block_size ? std::max<std::uint64_t>(1, hi - options_.block_size) : 1;
    next_hi_ = lo;
    if (lookahead_ == 1) {
      std::promise<TauBlock> ready;
      ready.set_value(sieve_block(lo, hi, options_));
      pending_.push_back(ready.get_future());
    } else {
      pending_.push_back(std::async(std::launch::async, [lo, hi, opts = options_] {
        return sieve_block(lo, hi, opts);
      }));
    }
  }
}

TauBlock DescendingBlockStream::next() {
  refill();
  if (pending_.empty()) throw std::out_of_range("DescendingBlockStream exhausted");
  TauBlock block = pending_.front().get();
  pending_.pop_front();
  refill();
  return block;
}

}  // namespace orbitlab
