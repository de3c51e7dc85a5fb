#include "orbitlab/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace orbitlab {

namespace {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

std::uint64_t mod(std::int64_t n, std::uint64_t q) {
  const auto r = n % static_cast<std::int64_t>(q);
  return static_cast<std::uint64_t>(r < 0 ? r + static_cast<std::int64_t>(q) : r);
}

// e(r/q) for an exact residue r.
struct Phase {
  double re, im;
};

Phase unit(std::uint64_t r, std::uint64_t q) {
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(q);
  return {std::cos(angle), std::sin(angle)};
}

void require_nonempty(const Segment& segment, const char* what) {
  if (segment.empty()) throw std::invalid_argument(std::string(what) + ": empty segment");
}

void require_modulus(std::uint64_t q, std::uint64_t h, const char* what) {
  if (q < 2 || h >= q) {
    throw std::invalid_argument(std::string(what) + ": need q >= 2 and 0 <= h < q");
  }
}

std::uint64_t isqrt(std::uint64_t n) {
  auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

// Counts of tau(n_j) mod q.
std::vector<std::uint64_t> tau_residues(const Segment& segment, std::uint64_t q) {
  std::vector<std::uint64_t> counts(q, 0);
  for (const auto& p : segment.points) ++counts[p.tau % q];
  return counts;
}

double bias_from(const std::vector<std::uint64_t>& n_counts, std::uint64_t V, std::uint64_t q,
                 std::uint64_t h) {
  if (h == 0) return 1.0;
  CompensatedSum re, im;
  for (std::uint64_t a = 0; a < q; ++a) {
    if (n_counts[a] == 0) continue;
    const auto e = unit(h * a % q, q);
    const auto c = static_cast<double>(n_counts[a]);
    re.add(c * e.re);
    im.add(c * e.im);
  }
  return std::min(std::hypot(re.value(), im.value()) / static_cast<double>(V), 1.0);
}

double phase_msq_from(const std::vector<std::uint64_t>& tau_counts, std::uint64_t V,
                      std::uint64_t q, std::uint64_t h) {
  CompensatedSum sum;
  for (std::uint64_t t = 0; t < q; ++t) {
    const std::uint64_t r = h * t % q;
    if (r == 0 || tau_counts[t] == 0) continue;
    // |e(-r/q) - 1|^2 = 4 sin^2(pi r / q)
    const double s = std::sin(std::numbers::pi * static_cast<double>(r) / static_cast<double>(q));
    sum.add(static_cast<double>(tau_counts[t]) * 4.0 * s * s);
  }
  return std::clamp(sum.value() / static_cast<double>(V), 0.0, 4.0);
}

// Fraction of tau(n_j) divisible by q / gcd(h, q), from tau mod q.
ResidueConcentration concentration_from(const std::vector<std::uint64_t>& tau_counts,
                                        std::uint64_t V, std::uint64_t q, std::uint64_t h) {
  ResidueConcentration out;
  out.modulus = q / std::gcd(h, q);
  out.V = V;
  for (std::uint64_t t = 0; t < q; t += out.modulus) out.hits += tau_counts[t];
  return out;
}

}  // namespace

ResidueDistribution ResidueDistribution::marginal(std::uint64_t divisor) const {
  if (divisor == 0 || q % divisor != 0) {
    throw std::invalid_argument("marginal: modulus must divide q");
  }
  ResidueDistribution out{divisor, V, std::vector<std::uint64_t>(divisor, 0)};
  for (std::uint64_t a = 0; a < q; ++a) out.counts[a % divisor] += counts[a];
  return out;
}

ResidueDistribution residue_distribution(const Segment& segment, std::uint64_t q) {
  require_nonempty(segment, "residue_distribution");
  if (q < 1) throw std::invalid_argument("residue_distribution: q must be >= 1");
  ResidueDistribution out{q, segment.V(), std::vector<std::uint64_t>(q, 0)};
  for (const auto& p : segment.points) ++out.counts[mod(p.n, q)];
  return out;
}

Discrepancy divisor_discrepancy(const Segment& segment, std::uint64_t N, bool keep_terms) {
  Discrepancy out;
  const std::uint64_t V = segment.V();
  if (V == 0) return out;
  std::int64_t lo = segment.points.front().n, hi = lo;
  for (const auto& p : segment.points) {
    lo = std::min(lo, p.n);
    hi = std::max(hi, p.n);
  }
  if (lo < 1) throw std::invalid_argument("divisor_discrepancy: values must be positive");
  std::vector<bool> present(static_cast<std::size_t>(hi - lo + 1), false);
  for (const auto& p : segment.points) present[static_cast<std::size_t>(p.n - lo)] = true;

  const std::uint64_t dmax = isqrt(2 * N);
  const auto ulo = static_cast<std::uint64_t>(lo), uhi = static_cast<std::uint64_t>(hi);
  CompensatedSum total;
  for (std::uint64_t d = 1; d <= dmax; ++d) {
    std::uint64_t hits = 0;
    for (std::uint64_t m = (ulo + d - 1) / d * d; m <= uhi; m += d) hits += present[m - ulo];
    const double term =
        std::abs(static_cast<double>(hits) - static_cast<double>(V) / static_cast<double>(d));
    total.add(term);
    if (keep_terms) out.per_d.push_back(term);
  }
  out.total = total.value();
  const double scale = static_cast<double>(V) * std::log(static_cast<double>(N));
  out.normalized = scale > 0 ? out.total / scale : std::nan("");
  return out;
}

double fourier_bias(const Segment& segment, std::uint64_t q, std::uint64_t h) {
  require_nonempty(segment, "fourier_bias");
  require_modulus(q, h, "fourier_bias");
  return bias_from(residue_distribution(segment, q).counts, segment.V(), q, h);
}

double phase_increment_msq(const Segment& segment, std::uint64_t q, std::uint64_t h) {
  require_nonempty(segment, "phase_increment_msq");
  require_modulus(q, h, "phase_increment_msq");
  if (h == 0) throw std::invalid_argument("phase_increment_msq: h must be nonzero mod q");
  return phase_msq_from(tau_residues(segment, q), segment.V(), q, h);
}

double phase_increment_identity_error(const Segment& segment, std::uint64_t q, std::uint64_t h) {
  require_modulus(q, h, "phase_increment_identity_error");
  double worst = 0.0;
  for (const auto& p : segment.points) {
    const std::int64_t next = p.n - static_cast<std::int64_t>(p.tau);
    const auto z0 = unit(h * mod(p.n, q) % q, q);
    const auto z1 = unit(h * mod(next, q) % q, q);
    const double lhs = std::hypot(z1.re - z0.re, z1.im - z0.im);
    const auto u = unit(mod(-static_cast<std::int64_t>(h * (p.tau % q) % q), q), q);
    const double rhs = std::hypot(u.re - 1.0, u.im);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

ResidueConcentration residue_concentration(const Segment& segment, std::uint64_t q,
                                           std::uint64_t h) {
  require_modulus(q, h, "residue_concentration");
  return concentration_from(tau_residues(segment, q), segment.V(), q, h);
}

CrtLevel crt_level(const std::vector<Congruence>& classes, std::uint64_t R) {
  if (R < 1) throw std::invalid_argument("crt_level: R must be >= 1");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].modulus == 0) throw std::invalid_argument("crt_level: zero modulus");
    for (std::size_t k = i + 1; k < classes.size(); ++k) {
      if (std::gcd(classes[i].modulus, classes[k].modulus) != 1) {
        throw std::invalid_argument("crt_level: moduli " + std::to_string(classes[i].modulus) +
                                    " and " + std::to_string(classes[k].modulus) +
                                    " are not coprime");
      }
    }
  }
  using u128 = unsigned __int128;
  u128 residue = 0, modulus = 1;
  for (const auto& c : classes) {
    const u128 m = c.modulus;
    const u128 a = c.residue % c.modulus;
    // Find t with residue + modulus * t == a (mod m).
    u128 t = 0;
    const u128 step = modulus % m;
    u128 cur = residue % m;
    while (cur != a) {
      cur = (cur + step) % m;
      if (++t > m) throw std::logic_error("crt_level: no solution");
    }
    residue += modulus * t;
    modulus *= m;
    if (modulus > (u128{1} << 63)) throw std::invalid_argument("crt_level: combined modulus too large");
  }
  CrtLevel out;
  out.residue = static_cast<std::uint64_t>(residue);
  out.modulus = static_cast<std::uint64_t>(modulus);
  const std::uint64_t first = out.residue == 0 ? out.modulus : out.residue;
  out.candidates = first > R ? 0 : (R - first) / out.modulus + 1;
  if (out.candidates == 1) out.level = first;
  return out;
}

SoftLadder variance_and_regular_set(const Segment& segment, double eta) {
  require_nonempty(segment, "variance_and_regular_set");
  if (!(eta > 0.0 && eta < 1.0)) {
    throw std::invalid_argument("variance_and_regular_set: eta must lie in (0, 1)");
  }
  const auto V = static_cast<double>(segment.V());
  const std::uint64_t energy = segment.energy();
  SoftLadder out;
  out.T = static_cast<double>(energy) / V;
  CompensatedSum sq;
  for (const auto& p : segment.points) {
    const double d = static_cast<double>(p.tau) - out.T;
    sq.add(d * d);
  }
  out.variance = sq.value() / V;
  out.regular.N = segment.N;
  out.regular.T = out.T;
  out.regular.eta = eta;
  std::uint64_t member_energy = 0;
  // |tau - E/V| <= eta E/V  <=>  |V tau - E| <= eta E
  const auto Vi = static_cast<std::int64_t>(segment.V());
  for (std::size_t i = 0; i < segment.points.size(); ++i) {
    const auto tau = segment.points[i].tau;
    const auto dev = std::llabs(Vi * static_cast<std::int64_t>(tau) - static_cast<std::int64_t>(energy));
    if (static_cast<double>(dev) <= eta * static_cast<double>(energy)) {
      out.regular.members.push_back(i);
      member_energy += tau;
    }
  }
  out.regular.saturation = static_cast<double>(member_energy) / static_cast<double>(energy);
  return out;
}

namespace {

class RunScanner {
 public:
  RunScanner(const Segment& seg, const LadderOptions& opt) : pts_(seg.points), opt_(opt) {}

  std::int64_t step(std::size_t i) const { return pts_[i].n - pts_[i + 1].n; }

  bool violates(std::size_t i, std::uint64_t T) const {
    const double t = static_cast<double>(T);
    const double ds = std::abs(static_cast<double>(step(i)) - t);
    const double dl = std::abs(static_cast<double>(pts_[i].tau) - t);
    return ds > opt_.step_tol * t || dl > opt_.level_tol * t;
  }

  // Level and violation count over step-bearing indices [s, e).
  void evaluate(std::size_t s, std::size_t e) {
    const auto m = static_cast<double>(e - s);
    level_ = static_cast<std::uint64_t>(std::nearbyint(static_cast<double>(sum_) / m));
    violations_ = 0;
    for (std::size_t i = s; i < e; ++i) violations_ += violates(i, level_);
  }

  std::size_t allowed(std::size_t m) const {
    return static_cast<std::size_t>(std::floor(opt_.violation_budget * static_cast<double>(m)));
  }

  std::vector<LadderRun> scan(std::uint64_t N) {
    std::vector<LadderRun> runs;
    const std::size_t V = pts_.size();
    std::size_t s = 0;
    while (s + 1 < V) {
      // Step-bearing indices [s, e); the run's points are s..e.
      std::size_t e = s + 1;
      sum_ = pts_[s].tau;
      evaluate(s, e);
      if (violations_ > 0) {
        ++s;
        continue;
      }
      while (e + 1 < V) {
        sum_ += pts_[e].tau;
        const auto prev_level = level_;
        const auto prev_violations = violations_;
        const auto m = static_cast<double>(e + 1 - s);
        const auto level = static_cast<std::uint64_t>(std::nearbyint(static_cast<double>(sum_) / m));
        if (level == prev_level) {
          violations_ = prev_violations + violates(e, level);
        } else {
          evaluate(s, e + 1);
        }
        if (violations_ > allowed(e + 1 - s)) {
          sum_ -= pts_[e].tau;
          level_ = prev_level;
          violations_ = prev_violations;
          break;
        }
        ++e;
      }
      // Trim so the run ends on a satisfying index within budget.
      while (e > s && (violates(e - 1, level_) || violations_ > allowed(e - s))) {
        --e;
        if (e == s) break;
        sum_ -= pts_[e].tau;
        evaluate(s, e);
      }
      const std::size_t len = e - s + 1;
      if (e > s && len >= opt_.min_len && !violates(s, level_)) {
        LadderRun run;
        run.N = N;
        run.start = s;
        for (std::size_t i = s; i <= e; ++i) run.values.push_back(pts_[i].n);
        run.T = level_;
        run.r = len;
        run.step_tol = opt_.step_tol;
        run.level_tol = opt_.level_tol;
        run.violations = violations_;
        runs.push_back(std::move(run));
        s = e;
      } else {
        ++s;
      }
    }
    return runs;
  }

 private:
  const std::vector<OrbitPoint>& pts_;
  const LadderOptions& opt_;
  std::uint64_t sum_ = 0;
  std::uint64_t level_ = 0;
  std::size_t violations_ = 0;
};

}  // namespace

std::vector<LadderRun> detect_ladders(const Segment& segment, const LadderOptions& options) {
  if (!(options.step_tol > 0 && options.step_tol < 1 && options.level_tol > 0 &&
        options.level_tol < 1)) {
    throw std::invalid_argument("detect_ladders: tolerances must lie in (0, 1)");
  }
  if (options.min_len < 3) throw std::invalid_argument("detect_ladders: min_len must be >= 3");
  if (options.violation_budget < 0 || options.violation_budget >= 1) {
    throw std::invalid_argument("detect_ladders: violation budget must lie in [0, 1)");
  }
  return RunScanner(segment, options).scan(segment.N);
}

std::vector<std::uint64_t> default_moduli(std::uint64_t q_max) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t q = 2; q <= q_max; ++q) out.push_back(q);
  for (std::uint64_t p = 2; p <= 101; ++p) {
    bool prime = true;
    for (std::uint64_t d = 2; d * d <= p; ++d) prime = prime && p % d != 0;
    if (prime && p > q_max) out.push_back(p);
  }
  return out;
}

MixingReport mixing_report(const Segment& segment, const std::vector<std::uint64_t>& moduli) {
  require_nonempty(segment, "mixing_report");
  MixingReport out;
  out.N = segment.N;
  out.V = segment.V();
  const auto disc = divisor_discrepancy(segment, segment.N);
  out.discrepancy = disc.total;
  out.discrepancy_norm = disc.normalized;
  for (std::uint64_t q : moduli) {
    if (q < 2) continue;
    const auto& dist = out.residue.emplace(q, residue_distribution(segment, q)).first->second;
    const auto taus = tau_residues(segment, q);
    for (std::uint64_t h = 1; h < q; ++h) {
      out.rows.push_back({q, h, bias_from(dist.counts, out.V, q, h),
                          phase_msq_from(taus, out.V, q, h),
                          concentration_from(taus, out.V, q, h).fraction()});
    }
  }
  return out;
}

}  // namespace orbitlab
