#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "orbitlab/mixing.hpp"

using namespace orbitlab;

namespace {

// Orbit-like segment: successive values differ by the listed tau.
Segment chain(std::uint64_t N, std::int64_t start, const std::vector<std::uint32_t>& taus) {
  std::vector<OrbitPoint> pts;
  std::int64_t n = start;
  for (auto t : taus) {
    pts.push_back({n, t});
    n -= t;
  }
  return make_segment(N, std::move(pts));
}

// Brute force: test each element against each d.
double brute_discrepancy(const Segment& seg, std::uint64_t N) {
  double total = 0.0;
  for (std::uint64_t d = 1; d * d <= 2 * N; ++d) {
    std::uint64_t hits = 0;
    for (const auto& p : seg.points) hits += static_cast<std::uint64_t>(p.n) % d == 0;
    total += std::abs(static_cast<double>(hits) - static_cast<double>(seg.V()) / d);
  }
  return total;
}

const Segment kTen = make_segment(2, {{10, 4}, {6, 4}, {2, 2}});

}  // namespace

TEST_CASE("residue_distribution") {
  const auto d2 = residue_distribution(kTen, 2);
  CHECK(d2.counts == std::vector<std::uint64_t>{3, 0});
  CHECK(d2(0) == 1.0);
  CHECK(residue_distribution(kTen, 1)(0) == 1.0);
  const auto d3 = residue_distribution(kTen, 3);
  CHECK(d3.counts == std::vector<std::uint64_t>{1, 1, 1});
  CHECK_THROWS_AS(residue_distribution(Segment{}, 3), std::invalid_argument);
  CHECK_THROWS_AS(residue_distribution(kTen, 0), std::invalid_argument);
}

TEST_CASE("residue distributions marginalize consistently") {
  const auto seg = orbit_segment(400000, 65536);
  for (std::uint64_t q : {12ull, 30ull, 64ull}) {
    const auto full = residue_distribution(seg, q);
    CHECK(std::accumulate(full.counts.begin(), full.counts.end(), std::uint64_t{0}) == seg.V());
    for (std::uint64_t d = 1; d <= q; ++d) {
      if (q % d) continue;
      CHECK(full.marginal(d).counts == residue_distribution(seg, d).counts);
    }
  }
  CHECK_THROWS_AS(residue_distribution(seg, 12).marginal(5), std::invalid_argument);
}

TEST_CASE("divisor_discrepancy") {
  const auto one = make_segment(4, {{6, 4}});
  const auto d = divisor_discrepancy(one, 4, true);
  CHECK(d.total == doctest::Approx(0.5));
  CHECK(d.per_d.size() == 2);
  CHECK(d.per_d[0] == 0.0);
  CHECK(d.normalized == doctest::Approx(0.5 / std::log(4.0)));

  for (std::uint64_t N : {1024ull, 32768ull, 262144ull}) {
    const auto seg = orbit_segment(600000, N);
    const auto fast = divisor_discrepancy(seg, N);
    CHECK(fast.total == doctest::Approx(brute_discrepancy(seg, N)).epsilon(1e-12));
  }
}

TEST_CASE("fourier_bias") {
  CHECK(fourier_bias(kTen, 2, 1) == doctest::Approx(1.0));
  CHECK(fourier_bias(kTen, 7, 0) == 1.0);
  const auto four = make_segment(2, {{4, 1}, {3, 1}, {2, 1}, {1, 1}});
  CHECK(fourier_bias(four, 4, 1) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(fourier_bias(kTen, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(fourier_bias(kTen, 4, 4), std::invalid_argument);

  // All values congruent mod q/gcd(h,q) -> bias 1.
  const auto spaced = make_segment(1, {{50, 6}, {44, 6}, {38, 6}, {26, 12}});
  CHECK(fourier_bias(spaced, 12, 2) == doctest::Approx(1.0).epsilon(1e-14));

  const auto seg = orbit_segment(300000, 65536);
  for (std::uint64_t q = 2; q <= 30; ++q) {
    for (std::uint64_t h = 0; h < q; ++h) {
      const double b = fourier_bias(seg, q, h);
      CHECK(b >= 0.0);
      CHECK(b <= 1.0);
    }
  }
}

TEST_CASE("phase_increment_msq") {
  CHECK(phase_increment_msq(make_segment(1, {{9, 6}, {3, 2}}), 2, 1) == 0.0);
  CHECK(phase_increment_msq(make_segment(1, {{20, 4}, {16, 4}}), 2, 1) == 0.0);
  CHECK(phase_increment_msq(make_segment(1, {{1, 1}}), 2, 1) == doctest::Approx(4.0));
  CHECK_THROWS_AS(phase_increment_msq(kTen, 4, 0), std::invalid_argument);
}

TEST_CASE("residue_concentration") {
  const auto a = residue_concentration(make_segment(1, {{40, 4}, {30, 8}, {20, 12}}), 4, 1);
  CHECK(a.modulus == 4);
  CHECK(a.fraction() == 1.0);
  const auto b = residue_concentration(make_segment(1, {{40, 4}, {30, 6}}), 4, 2);
  CHECK(b.modulus == 2);
  CHECK(b.fraction() == 1.0);
  const auto c = residue_concentration(make_segment(1, {{40, 3}, {30, 5}}), 2, 1);
  CHECK(c.modulus == 2);
  CHECK(c.fraction() == 0.0);
}

TEST_CASE("phase identity, bias bound, and phase-to-residue bridge on random segments") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::uint32_t> tau_pick(1, 60);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::uint32_t> taus(50);
    const bool structured = trial % 4 == 0;
    const std::uint32_t base = 1 + trial % 7;
    for (auto& t : taus) t = structured ? base * (1 + tau_pick(rng) % 5) : tau_pick(rng);
    const auto seg = chain(1000, 100000 + trial, taus);
    for (std::uint64_t q = 2; q <= 24; ++q) {
      for (std::uint64_t h = 1; h < q; ++h) {
        CHECK(phase_increment_identity_error(seg, q, h) < 1e-12);
        const double msq = phase_increment_msq(seg, q, h);
        CHECK(msq >= 0.0);
        CHECK(msq <= 4.0);
        if (msq == 0.0) CHECK(residue_concentration(seg, q, h).fraction() == 1.0);
      }
    }
  }
}

TEST_CASE("crt_level") {
  const auto a = crt_level({{1, 2}, {2, 3}}, 6);
  CHECK(a.modulus == 6);
  CHECK(a.level == std::optional<std::uint64_t>{5});
  const auto b = crt_level({{0, 2}}, 1);
  CHECK(b.candidates == 0);
  CHECK_FALSE(b.level.has_value());
  const auto c = crt_level({{1, 2}, {1, 3}}, 40);
  CHECK(c.candidates == 7);  // 1, 7, ..., 37
  CHECK(c.candidates > 1);
  CHECK_FALSE(c.level.has_value());
  const auto d = crt_level({{3, 5}, {4, 7}, {2, 9}}, 300);
  CHECK(d.modulus == 315);
  CHECK(d.level.has_value());
  CHECK(*d.level % 5 == 3);
  CHECK(*d.level % 7 == 4);
  CHECK(*d.level % 9 == 2);
  CHECK(crt_level({{3, 5}, {4, 7}, {2, 9}}, 200).candidates == 0);
  CHECK_THROWS_AS(crt_level({{1, 4}, {1, 6}}, 10), std::invalid_argument);
  CHECK_THROWS_AS(crt_level({{1, 4}}, 0), std::invalid_argument);
}

TEST_CASE("variance_and_regular_set") {
  const auto flat = variance_and_regular_set(chain(10, 100, {6, 6, 6, 6}), 0.1);
  CHECK(flat.variance == 0.0);
  CHECK(flat.regular.saturation == 1.0);

  const auto two_four = variance_and_regular_set(chain(10, 100, {2, 4}), 0.4);
  CHECK(two_four.T == 3.0);
  CHECK(two_four.variance == 1.0);
  CHECK(two_four.regular.members == std::vector<std::size_t>{0, 1});
  CHECK(two_four.regular.saturation == 1.0);

  const auto spread = variance_and_regular_set(chain(10, 100, {2, 10}), 0.1);
  CHECK(spread.regular.members.empty());
  CHECK(spread.regular.saturation == 0.0);
  CHECK_THROWS_AS(variance_and_regular_set(kTen, 1.5), std::invalid_argument);
}

TEST_CASE("Chebyshev consistency of the regular set") {
  for (std::uint64_t N : {4096ull, 65536ull, 131072ull}) {
    const auto seg = orbit_segment(700000, N);
    for (double eta : {0.1, 0.3, 0.5, 0.9}) {
      const auto soft = variance_and_regular_set(seg, eta);
      const auto outside = static_cast<double>(seg.V() - soft.regular.members.size());
      const double chebyshev =
          soft.variance / ((eta * soft.T) * (eta * soft.T)) * static_cast<double>(seg.V());
      CHECK(outside <= chebyshev * (1 + 1e-12));
      CHECK(soft.regular.saturation >= 0.0);
      CHECK(soft.regular.saturation <= 1.0);
    }
  }
}

TEST_CASE("detect_ladders") {
  const LadderOptions tight{.step_tol = 0.1, .level_tol = 0.1, .min_len = 3};

  const auto constant = chain(100, 200, std::vector<std::uint32_t>(20, 7));
  const auto runs = detect_ladders(constant, tight);
  REQUIRE(runs.size() == 1);
  CHECK(runs[0].r == 20);
  CHECK(runs[0].T == 7);
  CHECK(runs[0].violations == 0);
  CHECK(runs[0].start == 0);

  const auto ten = detect_ladders(kTen, {.step_tol = 0.2, .level_tol = 0.2, .min_len = 3});
  REQUIRE(ten.size() == 1);
  CHECK(ten[0].r == 3);
  CHECK(ten[0].T == 4);
  CHECK(ten[0].values == std::vector<std::int64_t>{10, 6, 2});

  std::vector<std::uint32_t> alternating;
  for (int i = 0; i < 30; ++i) alternating.push_back(i % 2 ? 40 : 2);
  CHECK(detect_ladders(chain(1000, 5000, alternating), tight).empty());

  CHECK_THROWS_AS(detect_ladders(kTen, {.min_len = 2}), std::invalid_argument);
  CHECK_THROWS_AS(detect_ladders(kTen, {.step_tol = 1.5}), std::invalid_argument);
}

TEST_CASE("detect_ladders recovers planted progressions") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::uint32_t> noise(1, 50);
  for (int trial = 0; trial < 20; ++trial) {
    const std::uint32_t T = 8 + trial % 9;
    const std::size_t len = 12 + static_cast<std::size_t>(trial) * 3;
    std::vector<std::uint32_t> taus;
    for (int i = 0; i < 5; ++i) taus.push_back(T * 4 + noise(rng));
    const std::size_t planted_start = taus.size();
    for (std::size_t i = 0; i + 1 < len; ++i) taus.push_back(T);
    for (int i = 0; i < 5; ++i) taus.push_back(T * 4 + noise(rng));
    const auto seg = chain(100000, 150000, taus);
    const auto runs = detect_ladders(seg, {.step_tol = 0.1, .level_tol = 0.1, .min_len = 8});
    REQUIRE(runs.size() == 1);
    CHECK(runs[0].start == planted_start);
    CHECK(runs[0].T == T);
    CHECK(runs[0].r >= len);
    CHECK(runs[0].violations == 0);
  }
}

TEST_CASE("detect_ladders tolerates sparse violations within budget") {
  std::vector<std::uint32_t> taus(40, 10);
  taus[20] = 30;
  const auto seg = chain(1000, 5000, taus);
  const auto runs = detect_ladders(seg, {.step_tol = 0.1, .level_tol = 0.1, .min_len = 3,
                                         .violation_budget = 0.1});
  REQUIRE(runs.size() == 1);
  CHECK(runs[0].violations == 1);
  CHECK(runs[0].r == 40);
  const auto strict = detect_ladders(seg, {.step_tol = 0.1, .level_tol = 0.1, .min_len = 3,
                                           .violation_budget = 0.0});
  CHECK(strict.size() == 2);
}

TEST_CASE("mixing_report rows") {
  const auto seg = orbit_segment(200000, 16384);
  const auto moduli = default_moduli(8);
  CHECK(moduli.front() == 2);
  CHECK(moduli.back() == 101);
  const auto rep = mixing_report(seg, moduli);
  CHECK(rep.V == seg.V());
  std::size_t expected = 0;
  for (auto q : moduli) expected += q - 1;
  CHECK(rep.rows.size() == expected);
  CHECK(rep.residue.size() == moduli.size());
  CHECK(rep.discrepancy_norm >= 0.0);
}
