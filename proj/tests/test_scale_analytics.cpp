#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "orbitlab/scale_analytics.hpp"

using namespace orbitlab;

TEST_CASE("log_integral against the quadrature oracle") {
  // Frozen from the oracle and cross-checked with mpmath.li.
  CHECK(oracle::li_quadrature(2.0) == doctest::Approx(1.04516378011749).epsilon(1e-12));
  CHECK(oracle::li_quadrature(1e4) == doctest::Approx(1246.1372158993884).epsilon(1e-12));
  CHECK(oracle::li_quadrature(1e6) == doctest::Approx(78627.54915946219).epsilon(1e-12));

  CHECK(log_integral(2.0) == doctest::Approx(1.04516378011749).epsilon(1e-10));
  CHECK(log_integral(1e4) == doctest::Approx(1246.1372158993884).epsilon(1e-10));
  CHECK(log_integral(1e6) == doctest::Approx(78627.54915946219).epsilon(1e-10));
  CHECK(log_integral(1e9) == doctest::Approx(50849234.957001798).epsilon(1e-10));

  for (double x = 2.0; x < 1e9; x *= 1.7) {
    const double ref = oracle::li_quadrature(x);
    CHECK(std::abs(log_integral(x) - ref) <= 1e-10 * std::abs(ref));
  }
  CHECK_THROWS_AS(log_integral(1.5), std::invalid_argument);
}

TEST_CASE("log_integral is increasing and exceeds x / ln x from 10 on") {
  double prev = log_integral(2.0);
  for (double x = 2.25; x < 1e8; x *= 1.25) {
    const double v = log_integral(x);
    CHECK(v > prev);
    if (x >= 10) CHECK(v > x / std::log(x));
    prev = v;
  }
}

TEST_CASE("round_half_even") {
  CHECK(round_half_even(0.88603, 4) == doctest::Approx(0.8860));
  CHECK(round_half_even(2.5, 0) == 2.0);
  CHECK(round_half_even(3.5, 0) == 4.0);
  CHECK(round_half_even(-1.5, 0) == -2.0);
}

TEST_CASE("ratio_table rows from Table 1") {
  const auto rows = ratio_table({{10000, 962}, {1000000, 65059}, {10, 3}});
  const auto r4 = rows[0].rounded();
  CHECK(r4.r_logx == doctest::Approx(0.8860).epsilon(1e-12));
  CHECK(r4.r_loglog == doctest::Approx(1.0996).epsilon(1e-12));
  // Reference value 0.7719; principal-value li gives 0.771986 -> 0.7720.
  CHECK(std::abs(r4.r_li - 0.7719) <= 0.0005);
  const auto r6 = rows[1].rounded();
  CHECK(r6.r_logx == doctest::Approx(0.8988).epsilon(1e-12));
  CHECK(r6.r_loglog == doctest::Approx(1.0697).epsilon(1e-12));
  CHECK(std::abs(r6.r_li - 0.8275) <= 0.0005);
  const auto r1 = rows[2].rounded();
  CHECK(r1.r_logx == doctest::Approx(0.6908).epsilon(1e-12));
  CHECK(r1.r_loglog == doctest::Approx(0.9410).epsilon(1e-12));
  // Principal-value li(10) ~ 6.1656, so 3/li(10) ~ 0.4866, not the tabulated 0.0091.
  CHECK(r1.r_li == doctest::Approx(0.4866).epsilon(1e-4));
  CHECK(small_x_li_note(10).has_value());
  CHECK_FALSE(small_x_li_note(10000).has_value());

  for (const auto& r : rows) {
    CHECK(r.r_logx > 0);
    CHECK(r.r_logx < r.r_loglog);
    CHECK(r.r_li > 0);
  }
  CHECK(ratio_table({{10000, 962}}) == ratio_table({{10000, 962}}));
  CHECK_THROWS_AS(ratio_table({{5, 2}}), std::invalid_argument);
}

TEST_CASE("bounded_restrict") {
  const auto seg = make_segment(8, {{10, 4}});
  const auto r = bounded_restrict(seg, 3.0);
  CHECK(r.kept.points.empty());
  CHECK(r.discarded_energy == 4);
  CHECK(r.discarded_count == 1);

  const auto small = make_segment(100, {{190, 8}, {182, 4}, {178, 4}});
  const auto all = bounded_restrict(small, 100.0);
  CHECK(all.discarded_energy == 0);
  CHECK(all.kept.points == small.points);

  const auto orbit_seg = orbit_segment(300000, 65536);
  for (double A : {0.5, 1.0, 1.5, 2.0, 3.0}) {
    const auto part = bounded_restrict(orbit_seg, 65536, A);
    CHECK(part.kept_energy + part.discarded_energy == orbit_seg.energy());
    CHECK(part.kept.V() + part.discarded_count == orbit_seg.V());
  }
}

TEST_CASE("tail_energy") {
  const auto seg = orbit_segment(2000000, 1000000);
  const auto rep = tail_energy(seg, 1000000, 3.5);
  CHECK(rep.holds());
  CHECK(static_cast<double>(rep.tail_energy) <= rep.bound);
  CHECK(static_cast<double>(rep.tail_energy) / 1e6 < 0.05);

  const auto flat = make_segment(1000, {{1900, 6}, {1894, 6}});
  CHECK(tail_energy(flat, 1000, 3.5).tail_energy == 0);
  // Cutoff below every tau: the whole segment is tail.
  const auto degenerate = tail_energy(flat, 1000, 0.5);
  CHECK(degenerate.cutoff < 6);
  CHECK(degenerate.tail_energy == flat.energy());
  CHECK(degenerate.holds());

  const auto window = tail_energy(flat, 1000, 1.0).window_tau_sq;
  CHECK(window == tau_power_sum(501, 4001, 2));
}
