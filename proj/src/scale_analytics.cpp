#include "orbitlab/scale_analytics.hpp"

#include <cmath>
#include <stdexcept>

namespace orbitlab {

namespace {
constexpr double kEulerGamma = 0.57721566490153286061;
}

double log_integral(double x) {
  if (!(x >= 2.0)) throw std::invalid_argument("log_integral: x must be >= 2");
  // li(x) = gamma + ln ln x + sqrt(x) * sum_{n>=1} (-1)^{n-1} L^n / (n! 2^{n-1})
  //         * sum_{k=0}^{floor((n-1)/2)} 1/(2k+1),  L = ln x.
  const double L = std::log(x);
  double sum = 0.0, comp = 0.0;
  double power = 1.0;  // (-1)^{n-1} L^n / (n! 2^{n-1})
  double inner = 0.0;
  for (int n = 1; n < 1000; ++n) {
    power *= (n == 1 ? L : -L / (2.0 * n));
    if ((n - 1) % 2 == 0) inner += 1.0 / static_cast<double>(n);
    const double term = power * inner;
    const double y = term - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
    if (n > L && std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return kEulerGamma + std::log(L) + std::sqrt(x) * sum;
}

double round_half_even(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::nearbyint(value * scale) / scale;
}

RatioRow RatioRow::rounded(int decimals) const {
  return {x, a_x, round_half_even(r_logx, decimals), round_half_even(r_loglog, decimals),
          round_half_even(r_li, decimals)};
}

std::vector<RatioRow> ratio_table(const std::vector<OrbitLength>& rows) {
  std::vector<RatioRow> out;
  out.reserve(rows.size());
  for (const auto& [x, a] : rows) {
    if (x < 10) throw std::invalid_argument("ratio_table: x must be >= 10");
    const double xd = static_cast<double>(x);
    const double ad = static_cast<double>(a);
    const double L = std::log(xd);
    out.push_back({x, a, ad / (xd / L), ad / (xd / (L + std::log(L))), ad / log_integral(xd)});
  }
  return out;
}

std::optional<std::string> small_x_li_note(std::int64_t x) {
  if (x >= 10000) return std::nullopt;
  return "x=" + std::to_string(x) +
         ": r_li recomputed with principal-value li; tabulated small-x li ratios are not "
         "reproduced";
}

double tail_cutoff(std::uint64_t N, double A) {
  return std::pow(std::log(static_cast<double>(N)), A);
}

bool TailReport::holds() const {
  return static_cast<long double>(tail_energy) * static_cast<long double>(cutoff) <=
         static_cast<long double>(window_tau_sq);
}

TailReport tail_energy(const Segment& segment, std::uint64_t N, double A,
                       const SieveOptions& sieve) {
  if (N < 2) throw std::invalid_argument("tail_energy: N must be >= 2");
  TailReport r;
  r.N = N;
  r.A = A;
  r.cutoff = tail_cutoff(N, A);
  for (const auto& p : segment.points) {
    if (p.tau > r.cutoff) r.tail_energy += p.tau;
  }
  r.window_tau_sq = tau_power_sum(N / 2 + 1, 4 * N + 1, 2, sieve);
  r.bound = static_cast<double>(r.window_tau_sq) / r.cutoff;
  return r;
}

Restriction bounded_restrict(const Segment& segment, double cutoff) {
  Restriction r;
  r.kept.N = segment.N;
  r.kept.j_plus = segment.j_plus;
  for (const auto& p : segment.points) {
    if (p.tau <= cutoff) {
      r.kept.points.push_back(p);
      r.kept_energy += p.tau;
    } else {
      r.discarded_energy += p.tau;
      ++r.discarded_count;
    }
  }
  return r;
}

Restriction bounded_restrict(const Segment& segment, std::uint64_t N, double A) {
  return bounded_restrict(segment, tail_cutoff(N, A));
}

}  // namespace orbitlab
