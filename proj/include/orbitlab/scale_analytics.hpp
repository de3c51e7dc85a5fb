#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "orbitlab/orbit.hpp"

namespace orbitlab {

/// Principal-value logarithmic integral li(x) = PV int_0^x dt / ln t, x >= 2.
/// Ramanujan's series; relative error below 1e-13 over [2, 1e15].
double log_integral(double x);

/// Rounds to `decimals` places, ties to even.
double round_half_even(double value, int decimals);

/// a(x) against the heuristic models x/ln x, x/(ln x + ln ln x), and li(x).
struct RatioRow {
  std::int64_t x = 0;
  std::uint64_t a_x = 0;
  double r_logx = 0.0;
  double r_loglog = 0.0;
  double r_li = 0.0;

  RatioRow rounded(int decimals = 4) const;
  bool operator==(const RatioRow&) const = default;
};

struct OrbitLength {
  std::int64_t x = 0;
  std::uint64_t a_x = 0;
};

/// Requires x >= 10 for every row; throws std::invalid_argument otherwise.
std::vector<RatioRow> ratio_table(const std::vector<OrbitLength>& rows);

/// Set for x below 10^4, where tabulated li ratios are not reproducible by
/// any standard definition of li.
std::optional<std::string> small_x_li_note(std::int64_t x);

/// Energy of the crossing carried by tau values above (ln N)^A, against the
/// majorant sum_{N/2 < n <= 4N} tau(n)^2 / (ln N)^A.
struct TailReport {
  std::uint64_t N = 0;
  double A = 0.0;
  double cutoff = 0.0;
  std::uint64_t tail_energy = 0;
  std::uint64_t window_tau_sq = 0;
  double bound = 0.0;

  /// tail_energy * cutoff <= window_tau_sq, checked in integer-safe form.
  bool holds() const;
};

TailReport tail_energy(const Segment& segment, std::uint64_t N, double A,
                       const SieveOptions& sieve = {});

struct Restriction {
  Segment kept;
  std::uint64_t kept_energy = 0;
  std::uint64_t discarded_energy = 0;
  std::uint64_t discarded_count = 0;
};

/// Splits the segment into points with tau <= cutoff (kept) and the rest.
Restriction bounded_restrict(const Segment& segment, double cutoff);
/// cutoff = (ln N)^A.
Restriction bounded_restrict(const Segment& segment, std::uint64_t N, double A);

double tail_cutoff(std::uint64_t N, double A);

}  // namespace orbitlab
