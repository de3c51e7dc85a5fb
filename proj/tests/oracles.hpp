// Independent reference computations used only by the tests. Nothing here
// shares code with the library paths they check.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

// Enumerates divisor pairs d * (n/d) directly.
inline std::uint64_t divisors(std::uint64_t n) {
  std::uint64_t count = 0;
  for (std::uint64_t d = 1; d * d <= n; ++d) {
    if (n % d == 0) count += (d * d == n) ? 1 : 2;
  }
  return count;
}

// sum_{n <= x} tau(n) = 2 * sum_{d <= sqrt x} floor(x/d) - floor(sqrt x)^2.
inline std::uint64_t hyperbola_tau_sum(std::uint64_t x) {
  std::uint64_t s = 0;
  std::uint64_t r = 0;
  while ((r + 1) * (r + 1) <= x) ++r;
  for (std::uint64_t d = 1; d <= r; ++d) s += x / d;
  return 2 * s - r * r;
}

// Principal-value li(x) = int_0^x dt/ln t by adaptive Simpson on the regular
// integrand 1/ln t - 1/(t-1), plus PV int_0^x dt/(t-1) = ln(x-1).
inline double regular_part(double t) {
  const double u = t - 1.0;
  if (std::abs(u) < 1e-4) return 0.5 - u / 12.0 + u * u / 24.0;
  if (t <= 0.0) return 1.0;
  return 1.0 / std::log(t) - 1.0 / u;
}

inline double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive(double a, double b, double fa, double fm, double fb, double whole,
                       double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = regular_part(lm), frm = regular_part(rm);
  const double left = simpson(a, m, fa, flm, fm);
  const double right = simpson(m, b, fm, frm, fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive(a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         adaptive(m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

inline double li_quadrature(double x) {
  // Split at powers of two so each panel is smooth and well scaled; panels are
  // summed with Kahan compensation.
  std::vector<double> cuts = {0.0, 0.5, 1.0, 2.0};
  while (cuts.back() * 2 < x) cuts.push_back(cuts.back() * 2);
  cuts.push_back(x);
  double sum = 0.0, comp = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], b = cuts[i + 1];
    if (b <= a) continue;
    const double fa = regular_part(a), fb = regular_part(b), fm = regular_part(0.5 * (a + b));
    const double piece = adaptive(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), 1e-14, 50);
    const double y = piece - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum + std::log(x - 1.0);
}

}  // namespace oracle
