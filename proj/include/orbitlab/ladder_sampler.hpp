#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "orbitlab/orbit.hpp"

namespace orbitlab {

/// Fraction of sum tau carried by values with |tau - T| <= eps T.
/// Throws std::invalid_argument on empty input, T < 1, or eps < 0.
double concentration_ratio(std::span<const std::uint32_t> tau_values, std::uint64_t T, double eps);

/// round(ln N).
std::uint64_t default_level(std::uint64_t N);
/// Integers T >= 1 in [ln N - 3, ln N + 3].
std::vector<std::uint64_t> level_sweep(std::uint64_t N);

struct SamplerOptions {
  /// r = floor(r_factor * floor(N / T)) unless `length` is given.
  double r_factor = 0.9;
  std::optional<std::uint64_t> length;
  unsigned threads = 1;
  /// Keep the individual tau(m_i) in each sample.
  bool keep_tau_values = false;
  /// Below this many touched points tau is computed pointwise, above it the
  /// covering range is block-sieved.
  std::uint64_t pointwise_limit = 100'000;
  std::uint64_t block_size = kDefaultBlockSize;
};

/// m_i = a - i T for 0 <= i < r, with a uniform on [N + rT + 1, 2N].
struct ProgressionSample {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  std::uint64_t N = 0;
  std::uint64_t T = 0;
  std::uint64_t a = 0;
  std::uint64_t r = 0;
  std::uint64_t total_energy = 0;
  /// R(eps), aligned with the sampler's eps list.
  std::vector<double> R;
  /// Energy sum_i tau(m_i) grouped by tau value; index = tau.
  std::vector<std::uint64_t> energy_by_tau;
  std::vector<std::uint32_t> tau_values;

  bool operator==(const ProgressionSample&) const = default;
};

struct SamplerResult {
  std::uint64_t N = 0;
  std::uint64_t T = 0;
  std::vector<double> eps;
  std::vector<ProgressionSample> samples;
  /// max over samples of R(eps), aligned with eps.
  std::vector<double> max_R;

  bool operator==(const SamplerResult&) const = default;
};

/// Deterministic in (N, T, count, eps, seed, r options) for any thread count.
/// Throws std::invalid_argument when T < 1, count < 1, r < 1, or rT >= N.
SamplerResult sample_progressions(std::uint64_t N, std::uint64_t T, std::uint64_t count,
                                  const std::vector<double>& eps, std::uint64_t seed,
                                  const SamplerOptions& options = {});

/// Energy-weighted tau histogram, each sample normalized to total 1 and then
/// averaged. Keys are bin starts (multiples of bin_width, from 0).
std::map<std::uint32_t, double> tau_histogram(const std::vector<ProgressionSample>& samples,
                                              std::uint32_t bin_width = 1);

enum class BandMode {
  /// Levels are exact tau values.
  ExactLevel,
  /// Levels are dyadic bands [2^k, 2^{k+1}), keyed by 2^k.
  DyadicBand,
};

struct ConcentrationScan {
  std::uint64_t N = 0;
  BandMode mode = BandMode::ExactLevel;
  std::map<std::uint64_t, std::uint64_t> level_energy;
  std::uint64_t total_energy = 0;
  double max_frac = 0.0;
  std::uint64_t argmax_level = 0;
  /// Exact-level mode with smoothing s: max over T' of the energy with
  /// |tau - T'| <= s, divided by N. Equals max_frac when s = 0.
  double max_frac_smoothed = 0.0;
};

ConcentrationScan orbit_scale_concentration(const Segment& segment, std::uint64_t N,
                                            BandMode mode, std::uint32_t smoothing = 0);
/// Walks the orbit from x; throws std::invalid_argument when N >= x.
ConcentrationScan orbit_scale_concentration(std::int64_t x, std::uint64_t N, BandMode mode,
                                            std::uint32_t smoothing = 0,
                                            const RunOptions& options = {});

struct DyadicTauEnergy {
  /// k -> sum of tau over points with 2^k <= tau < 2^{k+1}.
  std::map<int, std::uint64_t> energy;
  std::uint64_t total = 0;
  int argmax = -1;
};

DyadicTauEnergy energy_by_dyadic_tau_range(const Segment& segment);

std::string to_string(BandMode mode);
BandMode parse_band_mode(const std::string& text);

}  // namespace orbitlab
