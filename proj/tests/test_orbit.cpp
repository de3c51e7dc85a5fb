#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "orbitlab/orbit.hpp"

using namespace orbitlab;
namespace fs = std::filesystem;

namespace {

// Independent walk using only the trial-division oracle.
std::uint64_t brute_orbit_length(std::int64_t x) {
  std::uint64_t steps = 0;
  for (std::int64_t n = x; n > 0; n -= static_cast<std::int64_t>(oracle::divisors(n))) ++steps;
  return steps;
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("orbitlab_test_" + name);
}

const DyadicRecord& record_for(const OrbitSummary& s, std::uint64_t N) {
  for (const auto& r : s.dyadic) {
    if (r.N == N) return r;
  }
  throw std::out_of_range("no record");
}

}  // namespace

TEST_CASE("orbit_step") {
  CHECK(orbit_step(2) == 0);
  CHECK(orbit_step(10) == 6);
  CHECK(orbit_step(6) == 2);
  CHECK_THROWS_AS(orbit_step(0), std::invalid_argument);
  CHECK_THROWS_AS(orbit_step(-3), std::invalid_argument);
  for (std::int64_t n = 1; n < 1000; ++n) CHECK(orbit_step(n) < n);
}

TEST_CASE("run_orbit small values") {
  const auto one = run_orbit(1);
  CHECK(one.a_x == 1);
  CHECK(one.n_final == 0);
  CHECK(one.dyadic.empty());

  const auto ten = run_orbit(10);
  CHECK(ten.a_x == 3);
  CHECK(ten.n_final == 0);
  CHECK(ten.total_energy == 10);
  CHECK(ten.last_tau == 2);
  CHECK(run_orbit(2).a_x == 1);
  CHECK_THROWS_AS(run_orbit(0), std::invalid_argument);
}

TEST_CASE("dyadic records for the hand-walked orbit 10 -> 6 -> 2 -> 0") {
  const auto s = run_orbit(10);
  REQUIRE(s.dyadic.size() == 4);
  const auto& r8 = record_for(s, 8);
  CHECK(r8.j_plus == 0);
  CHECK(r8.j_minus == 1);
  CHECK(r8.energy == 4);
  CHECK(r8.partial);
  const auto& r4 = record_for(s, 4);
  CHECK(r4.j_plus == 1);
  CHECK(r4.j_minus == 2);
  CHECK(r4.V == 1);
  CHECK(r4.energy == 4);
  CHECK_FALSE(r4.partial);
  const auto& r2 = record_for(s, 2);
  CHECK(r2.V == 0);
  CHECK(r2.skipped);
  const auto& r1 = record_for(s, 1);
  CHECK(r1.j_plus == 2);
  CHECK(r1.j_minus == 3);
  CHECK(r1.energy == 2);
  CHECK(r1.delta_N == 3);  // max tau on {1,2,3,4}
  CHECK(r4.delta_N == 6);  // max tau on (2,16]: tau(12) = 6
}

TEST_CASE("Table 1 orbit lengths through 1e6") {
  CHECK(run_orbit(100).a_x == 19);
  CHECK(run_orbit(1000).a_x == 116);
  CHECK(run_orbit(10000).a_x == 962);
  CHECK(run_orbit(100000).a_x == 7534);
  CHECK(run_orbit(1000000).a_x == 65059);
}

TEST_CASE("orbit lengths agree with brute-force walks and the DP table") {
  const auto table = orbit_lengths_upto(20000);
  CHECK(table[10] == 3);
  CHECK(table[10000] == 962);
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::int64_t> pick(1, 20000);
  for (int i = 0; i < 200; ++i) {
    const auto x = pick(rng);
    const auto s = run_orbit(x, {.block_size = 512});
    REQUIRE(s.a_x == brute_orbit_length(x));
    REQUIRE(s.a_x == table[static_cast<std::size_t>(x)]);
    REQUIRE(check_summary(s).empty());
  }
}

TEST_CASE("summary does not depend on block size or thread count") {
  const auto reference = run_orbit(123457);
  CHECK(run_orbit(123457, {.block_size = 64}) == reference);
  CHECK(run_orbit(123457, {.block_size = 1000, .threads = 4}) == reference);
  CHECK(run_orbit(123457, {.block_size = 4096, .method = SieveMethod::Plain}) == reference);
}

TEST_CASE("dyadic records: invariants and exact delta_N") {
  const auto s = run_orbit(300000);
  CHECK(check_summary(s).empty());
  std::uint64_t v_total = 0;
  for (const auto& r : s.dyadic) {
    CHECK(r.delta_exact);
    CHECK(r.delta_N == tau_max(r.N / 2 + 1, 4 * r.N + 1));
    CHECK(r.mean_tau() * static_cast<double>(r.V) == doctest::Approx(static_cast<double>(r.energy)));
    CHECK(r.var_tau() >= 0.0);
    if (!r.partial && !r.skipped) {
      CHECK(r.V >= 1);
      const auto gap = std::llabs(static_cast<long long>(r.energy) - static_cast<long long>(r.N));
      CHECK(gap <= 2 * static_cast<long long>(r.delta_N));
    }
    v_total += r.V;
  }
  // Every step except a final visit to n = 1 lies on some dyadic scale.
  CHECK((v_total == s.a_x || v_total + 1 == s.a_x));
}

TEST_CASE("delta_N falls back to the sieved part when the side sieve is capped") {
  const auto s = run_orbit(100000, {.side_sieve_limit = 0});
  const auto& top = s.dyadic.back();
  CHECK_FALSE(top.delta_exact);
  CHECK(record_for(s, 1024).delta_exact);
  CHECK(s.a_x == 7534);
}

TEST_CASE("orbit_segment examples") {
  const auto s4 = orbit_segment(10, 4);
  CHECK(s4.points == std::vector<OrbitPoint>{{6, 4}});
  CHECK(s4.j_plus == 1);
  CHECK(orbit_segment(10, 8).points == std::vector<OrbitPoint>{{10, 4}});
  CHECK_THROWS_AS(orbit_segment(10, 10), std::invalid_argument);
  CHECK_THROWS_AS(orbit_segment(10, 20), std::invalid_argument);

  const auto s64 = orbit_segment(100, 64);
  REQUIRE(s64.V() >= 2);
  const auto& pts = s64.points;
  std::int64_t inner = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) inner += pts[i].tau;
  CHECK(pts.front().n - pts.back().n == inner);
}

TEST_CASE("segments: telescoping, strict decrease, hitting bound") {
  const std::int64_t x = 500000;
  const auto summary = run_orbit(x);
  const auto segments = dyadic_segments(x);
  REQUIRE(segments.size() == summary.dyadic.size());
  for (const auto& rec : summary.dyadic) {
    const auto& seg = segments.at(rec.N);
    CHECK(seg.j_plus == rec.j_plus);
    CHECK(seg.V() == rec.V);
    CHECK(seg.energy() == rec.energy);
    for (std::size_t i = 0; i + 1 < seg.points.size(); ++i) {
      CHECK(seg.points[i + 1].n < seg.points[i].n);
      CHECK(seg.points[i].n - seg.points[i + 1].n == seg.points[i].tau);
    }
    if (rec.partial || rec.N < 2) continue;
    const double lnN = std::log(static_cast<double>(rec.N));
    for (std::uint64_t L : {2u, 4u, 8u, static_cast<unsigned>(2 * std::ceil(lnN))}) {
      std::uint64_t hits = 0;
      for (const auto& p : seg.points) hits += p.tau >= L;
      CHECK(static_cast<double>(hits) <=
            static_cast<double>(rec.N + 2 * rec.delta_N) / static_cast<double>(L));
    }
  }
  CHECK(orbit_segment(x, 4096).points == segments.at(4096).points);
}

TEST_CASE("baseline bounds x / max tau <= a(x) <= ceil(x/2)") {
  const auto table = orbit_lengths_upto(5000);
  for (std::uint64_t x = 1; x <= 5000; ++x) {
    const auto mt = tau_max(1, x + 1);
    CHECK(table[x] * mt >= x);
    CHECK(table[x] <= (x + 1) / 2);
  }
}

TEST_CASE("checkpoint and resume reproduce an uninterrupted run") {
  const auto path = temp_path("resume.ckpt");
  fs::remove(path);
  const auto reference = run_orbit(1000000);

  OrbitWalk walk(1000000, {.block_size = 1 << 16});
  while (walk.current() > 500000) walk.advance(1000);
  CHECK_FALSE(walk.done());
  walk.save(path);

  const auto resumed = resume_orbit(path, {.block_size = 1000, .threads = 3});
  CHECK(resumed.a_x == 65059);
  CHECK(resumed == reference);

  // A completed state returns its summary unchanged.
  const auto done_path = temp_path("done.ckpt");
  run_orbit(1000000, {.checkpoint_path = done_path});
  CHECK(resume_orbit(done_path) == reference);
  CHECK(resume_orbit(done_path, {.block_size = 77}) == reference);
  fs::remove(path);
  fs::remove(done_path);
}

TEST_CASE("periodic checkpoints and stop requests") {
  const auto path = temp_path("periodic.ckpt");
  fs::remove(path);
  std::atomic<bool> stop{false};
  RunOptions opts{.block_size = 4096, .checkpoint_path = path, .checkpoint_every = 500,
                  .stop_requested = &stop};
  opts.on_visit = [&](std::uint64_t j, std::int64_t, std::uint32_t) {
    if (j == 3000) stop = true;
  };
  CHECK_THROWS_AS(run_orbit(200000, opts), OrbitInterrupted);
  REQUIRE(fs::exists(path));
  auto partial = OrbitWalk::resume(path, {});
  CHECK_FALSE(partial.done());
  CHECK(partial.steps() >= 3000);
  CHECK(resume_orbit(path, {.checkpoint_path = path, .checkpoint_every = 700}) == run_orbit(200000));
  fs::remove(path);
}

TEST_CASE("corrupt and mismatched checkpoints are refused") {
  const auto path = temp_path("corrupt.ckpt");
  run_orbit(5000, {.checkpoint_path = path});
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  auto flipped = bytes;
  flipped[30] ^= 0x5a;
  write(flipped);
  CHECK_THROWS_AS(resume_orbit(path), CheckpointError);

  auto versioned = bytes;
  versioned[8] = 9;
  write(versioned);
  CHECK_THROWS_WITH_AS(resume_orbit(path), doctest::Contains("version"), CheckpointError);

  write(bytes.substr(0, 20));
  CHECK_THROWS_AS(resume_orbit(path), CheckpointError);
  write("garbage");
  CHECK_THROWS_AS(resume_orbit(path), CheckpointError);
  CHECK_THROWS_AS(resume_orbit(temp_path("missing.ckpt")), CheckpointError);
  fs::remove(path);
}

TEST_CASE("checkpoint write failure leaves the previous state intact") {
  const auto path = temp_path("intact.ckpt");
  OrbitWalk walk(50000, {});
  walk.advance(100);
  walk.save(path);
  walk.advance(100);
  CHECK_THROWS_AS(walk.save(temp_path("no_such_dir") / "x.ckpt"), CheckpointError);
  CHECK(OrbitWalk::resume(path, {}).steps() == 100);
  fs::remove(path);
}

TEST_CASE("energy identity on random starts") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::int64_t> pick(1, 1000000);
  for (int i = 0; i < 50; ++i) {
    const auto s = run_orbit(pick(rng), {.block_size = 1 << 16});
    REQUIRE(static_cast<std::int64_t>(s.total_energy) == s.x - s.n_final);
    REQUIRE(s.n_final <= 0);
    REQUIRE(s.n_final > -static_cast<std::int64_t>(s.last_tau));
  }
}
