#include "orbitlab/ladder_sampler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "orbitlab/random.hpp"

namespace orbitlab {

namespace {

bool in_band(std::uint64_t tau, std::uint64_t T, double eps) {
  const double t = static_cast<double>(T);
  return std::abs(static_cast<double>(tau) - t) <= eps * t;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
  }
}

struct Accumulator {
  std::vector<std::uint64_t> band;
  std::vector<std::uint64_t> by_tau;
  std::uint64_t total = 0;

  void add(std::uint32_t tau, std::uint64_t T, const std::vector<double>& eps) {
    total += tau;
    if (by_tau.size() <= tau) by_tau.resize(tau + 1, 0);
    by_tau[tau] += tau;
    for (std::size_t e = 0; e < eps.size(); ++e) {
      if (in_band(tau, T, eps[e])) band[e] += tau;
    }
  }
};

}  // namespace

double concentration_ratio(std::span<const std::uint32_t> tau_values, std::uint64_t T, double eps) {
  if (tau_values.empty()) throw std::invalid_argument("concentration_ratio: no values");
  if (T < 1) throw std::invalid_argument("concentration_ratio: T must be >= 1");
  if (eps < 0) throw std::invalid_argument("concentration_ratio: eps must be >= 0");
  std::uint64_t total = 0, band = 0;
  for (auto tau : tau_values) {
    total += tau;
    if (in_band(tau, T, eps)) band += tau;
  }
  if (total == 0) throw std::invalid_argument("concentration_ratio: zero total energy");
  return static_cast<double>(band) / static_cast<double>(total);
}

std::uint64_t default_level(std::uint64_t N) {
  return static_cast<std::uint64_t>(std::llround(std::log(static_cast<double>(N))));
}

std::vector<std::uint64_t> level_sweep(std::uint64_t N) {
  const double L = std::log(static_cast<double>(N));
  std::vector<std::uint64_t> out;
  for (auto T = static_cast<std::int64_t>(std::ceil(L - 3)); T <= std::floor(L + 3); ++T) {
    if (T >= 1) out.push_back(static_cast<std::uint64_t>(T));
  }
  return out;
}

SamplerResult sample_progressions(std::uint64_t N, std::uint64_t T, std::uint64_t count,
                                  const std::vector<double>& eps, std::uint64_t seed,
                                  const SamplerOptions& options) {
  if (T < 1) throw std::invalid_argument("sample_progressions: T must be >= 1");
  if (count < 1) throw std::invalid_argument("sample_progressions: need at least one sample");
  for (double e : eps) {
    if (e < 0) throw std::invalid_argument("sample_progressions: eps must be >= 0");
  }
  const std::uint64_t r = options.length.value_or(static_cast<std::uint64_t>(
      std::floor(options.r_factor * static_cast<double>(N / T))));
  if (r < 1) throw std::invalid_argument("sample_progressions: progression length is zero");
  if (r > N / T || r * T >= N) {
    throw std::invalid_argument("sample_progressions: r*T = " + std::to_string(r * T) +
                                " leaves no start in (N + rT, 2N] for N = " + std::to_string(N));
  }

  SamplerResult result;
  result.N = N;
  result.T = T;
  result.eps = eps;
  result.samples.resize(count);
  const std::uint64_t a_lo = N + r * T + 1;
  const std::uint64_t a_span = 2 * N - a_lo + 1;
  for (std::uint64_t s = 0; s < count; ++s) {
    auto& sample = result.samples[s];
    sample.index = s;
    sample.seed = derive_seed(seed, s);
    SplitMix64 rng(sample.seed);
    sample.N = N;
    sample.T = T;
    sample.r = r;
    sample.a = a_lo + rng.below(a_span);
    if (options.keep_tau_values) sample.tau_values.assign(r, 0);
  }

  std::vector<Accumulator> acc(count);
  for (auto& a : acc) a.band.assign(eps.size(), 0);

  auto record = [&](std::size_t s, std::uint64_t i, std::uint32_t tau) {
    acc[s].add(tau, T, eps);
    if (options.keep_tau_values) result.samples[s].tau_values[i] = tau;
  };

  if (count * r <= options.pointwise_limit) {
    parallel_for(count, options.threads, [&](std::size_t s) {
      const auto& sample = result.samples[s];
      for (std::uint64_t i = 0; i < r; ++i) {
        const auto m = static_cast<std::int64_t>(sample.a - i * T);
        record(s, i, static_cast<std::uint32_t>(divisor_count(m)));
      }
    });
  } else {
    std::uint64_t lo_all = 2 * N, hi_all = 0;
    for (const auto& sample : result.samples) {
      lo_all = std::min(lo_all, sample.a - (r - 1) * T);
      hi_all = std::max(hi_all, sample.a + 1);
    }
    const SieveOptions sieve{options.block_size, SieveMethod::Hyperbola};
    for (std::uint64_t lo = lo_all; lo < hi_all; lo += sieve.block_size) {
      const auto block = sieve_block(lo, std::min(hi_all, lo + sieve.block_size), sieve);
      parallel_for(count, options.threads, [&](std::size_t s) {
        const auto& sample = result.samples[s];
        const std::uint64_t a = sample.a;
        if (a < block.lo) return;
        // i with block.lo <= a - iT < block.hi
        const std::uint64_t i_first = a >= block.hi ? (a - block.hi) / T + 1 : 0;
        const std::uint64_t i_last = std::min(r - 1, (a - block.lo) / T);
        for (std::uint64_t i = i_first; i <= i_last; ++i) record(s, i, block[a - i * T]);
      });
    }
  }

  result.max_R.assign(eps.size(), 0.0);
  for (std::uint64_t s = 0; s < count; ++s) {
    auto& sample = result.samples[s];
    sample.total_energy = acc[s].total;
    sample.energy_by_tau = std::move(acc[s].by_tau);
    for (std::size_t e = 0; e < eps.size(); ++e) {
      sample.R.push_back(static_cast<double>(acc[s].band[e]) /
                         static_cast<double>(acc[s].total));
      result.max_R[e] = std::max(result.max_R[e], sample.R.back());
    }
  }
  return result;
}

std::map<std::uint32_t, double> tau_histogram(const std::vector<ProgressionSample>& samples,
                                              std::uint32_t bin_width) {
  if (bin_width < 1) throw std::invalid_argument("tau_histogram: bin width must be >= 1");
  std::map<std::uint32_t, double> out;
  if (samples.empty()) return out;
  for (const auto& s : samples) {
    if (s.total_energy == 0) continue;
    for (std::size_t tau = 0; tau < s.energy_by_tau.size(); ++tau) {
      if (s.energy_by_tau[tau] == 0) continue;
      const auto bin = static_cast<std::uint32_t>(tau / bin_width * bin_width);
      out[bin] += static_cast<double>(s.energy_by_tau[tau]) / static_cast<double>(s.total_energy);
    }
  }
  for (auto& [bin, v] : out) v /= static_cast<double>(samples.size());
  return out;
}

ConcentrationScan orbit_scale_concentration(const Segment& segment, std::uint64_t N,
                                            BandMode mode, std::uint32_t smoothing) {
  if (N < 1) throw std::invalid_argument("orbit_scale_concentration: N must be >= 1");
  ConcentrationScan out;
  out.N = N;
  out.mode = mode;
  for (const auto& p : segment.points) {
    const std::uint64_t level =
        mode == BandMode::ExactLevel ? p.tau : std::bit_floor(std::uint64_t{p.tau});
    out.level_energy[level] += p.tau;
    out.total_energy += p.tau;
  }
  std::uint64_t best = 0;
  for (const auto& [level, energy] : out.level_energy) {
    if (energy > best) {
      best = energy;
      out.argmax_level = level;
    }
  }
  out.max_frac = static_cast<double>(best) / static_cast<double>(N);
  std::uint64_t best_smooth = best;
  if (mode == BandMode::ExactLevel && smoothing > 0) {
    for (const auto& [level, energy] : out.level_energy) {
      std::uint64_t window = 0;
      const std::uint64_t lo = level > smoothing ? level - smoothing : 0;
      for (auto it = out.level_energy.lower_bound(lo);
           it != out.level_energy.end() && it->first <= level + smoothing; ++it) {
        window += it->second;
      }
      best_smooth = std::max(best_smooth, window);
    }
  }
  out.max_frac_smoothed = static_cast<double>(best_smooth) / static_cast<double>(N);
  return out;
}

ConcentrationScan orbit_scale_concentration(std::int64_t x, std::uint64_t N, BandMode mode,
                                            std::uint32_t smoothing, const RunOptions& options) {
  return orbit_scale_concentration(orbit_segment(x, N, options), N, mode, smoothing);
}

DyadicTauEnergy energy_by_dyadic_tau_range(const Segment& segment) {
  DyadicTauEnergy out;
  for (const auto& p : segment.points) {
    const int k = static_cast<int>(std::bit_width(p.tau)) - 1;
    out.energy[k] += p.tau;
    out.total += p.tau;
  }
  std::uint64_t best = 0;
  for (const auto& [k, e] : out.energy) {
    if (e > best) {
      best = e;
      out.argmax = k;
    }
  }
  return out;
}

std::string to_string(BandMode mode) {
  return mode == BandMode::ExactLevel ? "exact-level" : "dyadic-band";
}

BandMode parse_band_mode(const std::string& text) {
  if (text == "exact-level") return BandMode::ExactLevel;
  if (text == "dyadic-band") return BandMode::DyadicBand;
  throw std::invalid_argument("unknown band mode '" + text + "'");
}

}  // namespace orbitlab
