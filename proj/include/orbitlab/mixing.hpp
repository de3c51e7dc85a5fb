#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "orbitlab/orbit.hpp"

namespace orbitlab {

/// Empirical distribution of segment values mod q, kept as exact counts over V.
struct ResidueDistribution {
  std::uint64_t q = 1;
  std::uint64_t V = 0;
  std::vector<std::uint64_t> counts;

  double operator()(std::uint64_t a) const {
    return static_cast<double>(counts[a % q]) / static_cast<double>(V);
  }
  /// Pushes the distribution forward to a divisor q' of q.
  ResidueDistribution marginal(std::uint64_t divisor) const;
};

/// Throws std::invalid_argument for an empty segment or q < 1.
ResidueDistribution residue_distribution(const Segment& segment, std::uint64_t q);

struct Discrepancy {
  /// sum_{d <= sqrt(2N)} | #{j : d | n_j} - V/d |
  double total = 0.0;
  /// total / (V ln N); NaN when V ln N = 0.
  double normalized = 0.0;
  /// term for d = 1, 2, ... when requested.
  std::vector<double> per_d;
};

Discrepancy divisor_discrepancy(const Segment& segment, std::uint64_t N, bool keep_terms = false);

/// |(1/V) sum_j e(h n_j / q)|, e(t) = exp(2 pi i t).
double fourier_bias(const Segment& segment, std::uint64_t q, std::uint64_t h);

/// (1/V) sum_j |e(-h tau(n_j) / q) - 1|^2, in [0, 4].
double phase_increment_msq(const Segment& segment, std::uint64_t q, std::uint64_t h);

/// Largest deviation over the segment between |e(h n_{j+1}/q) - e(h n_j/q)|
/// and |e(-h tau(n_j)/q) - 1|, with n_{j+1} = n_j - tau(n_j).
double phase_increment_identity_error(const Segment& segment, std::uint64_t q, std::uint64_t h);

struct ResidueConcentration {
  /// q / gcd(h, q)
  std::uint64_t modulus = 1;
  std::uint64_t hits = 0;
  std::uint64_t V = 0;
  double fraction() const { return V ? static_cast<double>(hits) / static_cast<double>(V) : 0.0; }
};

/// Fraction of j with q/gcd(h,q) dividing tau(n_j).
ResidueConcentration residue_concentration(const Segment& segment, std::uint64_t q,
                                           std::uint64_t h);

struct Congruence {
  std::uint64_t residue = 0;
  std::uint64_t modulus = 1;
};

struct CrtLevel {
  std::uint64_t residue = 0;
  std::uint64_t modulus = 1;
  /// Number of integers in [1, R] in the combined class.
  std::uint64_t candidates = 0;
  /// Set when exactly one candidate exists.
  std::optional<std::uint64_t> level;
};

/// Combines pairwise coprime congruences and locates the level in [1, R].
/// Throws std::invalid_argument on non-coprime moduli, zero moduli, or R < 1.
CrtLevel crt_level(const std::vector<Congruence>& classes, std::uint64_t R);

struct RegularSet {
  std::uint64_t N = 0;
  double T = 0.0;
  double eta = 0.0;
  /// Positions within the segment.
  std::vector<std::size_t> members;
  double saturation = 0.0;
};

struct SoftLadder {
  double T = 0.0;
  double variance = 0.0;
  RegularSet regular;
};

/// Mean level T, population variance, and the set {j : |tau(n_j) - T| <= eta T}.
SoftLadder variance_and_regular_set(const Segment& segment, double eta);

struct LadderOptions {
  double step_tol = 0.2;
  double level_tol = 0.2;
  std::size_t min_len = 3;
  /// Fraction of step-bearing indices allowed to violate a condition.
  double violation_budget = 0.1;
};

struct LadderRun {
  std::uint64_t N = 0;
  /// Position of m_1 in the segment.
  std::size_t start = 0;
  std::vector<std::int64_t> values;
  std::uint64_t T = 0;
  std::size_t r = 0;
  double step_tol = 0.0;
  double level_tol = 0.0;
  std::size_t violations = 0;
};

/// Maximal near-arithmetic runs m_1 > ... > m_r of consecutive segment points.
///
/// Conditions |m_i - m_{i+1} - T| <= step_tol T and |tau(m_i) - T| <= level_tol T
/// are checked on the r - 1 indices that have a successor; T is their mean tau
/// rounded half-to-even. Runs start and end on a satisfying index.
std::vector<LadderRun> detect_ladders(const Segment& segment, const LadderOptions& options = {});

/// {2, ..., q_max} together with every prime up to 101.
std::vector<std::uint64_t> default_moduli(std::uint64_t q_max = 64);

struct MixingRow {
  std::uint64_t q = 0;
  std::uint64_t h = 0;
  double bias = 0.0;
  double phase_msq = 0.0;
  double res_conc = 0.0;
};

struct MixingReport {
  std::uint64_t N = 0;
  std::uint64_t V = 0;
  double discrepancy = 0.0;
  double discrepancy_norm = 0.0;
  std::map<std::uint64_t, ResidueDistribution> residue;
  /// One row per (q, h) with 1 <= h < q, in increasing (q, h) order.
  std::vector<MixingRow> rows;
};

MixingReport mixing_report(const Segment& segment, const std::vector<std::uint64_t>& moduli);

}  // namespace orbitlab
