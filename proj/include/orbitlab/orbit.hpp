#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "orbitlab/tau_sieve.hpp"

namespace orbitlab {

/// Statistics of the orbit's passage through the dyadic interval (N, 2N],
/// N = 2^k. j_plus is the first index with n_j <= 2N, j_minus the first with
/// n_j <= N; the crossing is j_plus <= j < j_minus.
struct DyadicRecord {
  std::uint64_t N = 0;
  std::uint64_t j_plus = 0;
  std::uint64_t j_minus = 0;
  std::uint64_t V = 0;
  std::uint64_t energy = 0;
  std::uint64_t sum_tau_sq = 0;
  /// max tau over (N/2, 4N].
  std::uint32_t delta_N = 0;
  /// False when part of (N/2, 4N] above x was not sieved; delta_N is then the
  /// max over the sieved part only.
  bool delta_exact = true;
  /// The orbit starts inside (N, 2N] rather than above it.
  bool partial = false;
  /// The orbit jumped over (N, 2N] without landing in it (V = 0).
  bool skipped = false;

  /// Mean tau over the crossing: energy / V, exact as a fraction.
  double mean_tau() const { return V ? static_cast<double>(energy) / static_cast<double>(V) : 0.0; }
  /// Population variance of tau over the crossing: (V*sum_sq - energy^2) / V^2.
  double var_tau() const;

  bool operator==(const DyadicRecord&) const = default;
};

struct OrbitSummary {
  std::int64_t x = 0;
  std::uint64_t a_x = 0;
  std::int64_t n_final = 0;
  std::uint64_t total_energy = 0;
  /// tau(n_{a(x)-1}), the last step taken.
  std::uint32_t last_tau = 0;
  /// max tau(n) over 1 <= n <= x.
  std::uint32_t max_tau = 0;
  std::vector<DyadicRecord> dyadic;

  bool operator==(const OrbitSummary&) const = default;
};

using VisitFn = std::function<void(std::uint64_t j, std::int64_t n, std::uint32_t tau)>;
using ProgressFn = std::function<void(std::int64_t n, std::uint64_t j, std::uint64_t sieved)>;

struct RunOptions {
  std::uint64_t block_size = kDefaultBlockSize;
  SieveMethod method = SieveMethod::Hyperbola;
  unsigned threads = 1;
  /// Empty disables checkpointing.
  std::filesystem::path checkpoint_path;
  std::uint64_t checkpoint_every = std::uint64_t{1} << 26;
  /// Upper bound on how far above x the side sieve for delta_N may reach.
  std::uint64_t side_sieve_limit = std::uint64_t{1} << 24;
  /// Polled between blocks; when set, the walk checkpoints and throws
  /// OrbitInterrupted.
  const std::atomic<bool>* stop_requested = nullptr;
  VisitFn on_visit;
  ProgressFn on_progress;
  std::uint64_t progress_every = 100'000'000;

  SieveOptions sieve() const { return {block_size, method}; }
};

class OrbitInterrupted : public std::runtime_error {
 public:
  explicit OrbitInterrupted(const std::filesystem::path& checkpoint);
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// n - tau(n). Throws std::invalid_argument for n <= 0.
std::int64_t orbit_step(std::int64_t n);

/// Resumable walk n_{j+1} = n_j - tau(n_j) from x down to n <= 0.
///
/// The walk pulls blocks from a DescendingBlockStream anchored at n + 1, so
/// resuming with a different block size yields the same summary.
class OrbitWalk {
 public:
  OrbitWalk(std::int64_t x, RunOptions options);
  ~OrbitWalk();
  OrbitWalk(OrbitWalk&&) noexcept;
  OrbitWalk& operator=(OrbitWalk&&) noexcept;

  /// Loads a checkpoint. Throws CheckpointError on a corrupt or
  /// version-mismatched file.
  static OrbitWalk resume(const std::filesystem::path& state_file, RunOptions options);

  /// Takes up to max_steps steps; returns done().
  bool advance(std::uint64_t max_steps);
  bool done() const;
  std::int64_t current() const;
  std::uint64_t steps() const;

  /// Writes state atomically (temp file + rename). Throws CheckpointError,
  /// leaving any previous file at `path` untouched.
  void save(const std::filesystem::path& path) const;

  /// Requires done().
  OrbitSummary summary() const;

 private:
  struct State;
  OrbitWalk(std::unique_ptr<State> state, RunOptions options);
  void finalize();

  std::unique_ptr<State> state_;
  RunOptions options_;
  std::unique_ptr<DescendingBlockStream> stream_;
  TauBlock block_;
};

/// Full walk from x. Checkpoints to options.checkpoint_path every
/// options.checkpoint_every steps and at completion.
OrbitSummary run_orbit(std::int64_t x, const RunOptions& options = {});

/// Continues (or returns, if already complete) the run stored in state_file.
OrbitSummary resume_orbit(const std::filesystem::path& state_file,
                          const RunOptions& options = {});

struct OrbitPoint {
  std::int64_t n = 0;
  std::uint32_t tau = 0;
  bool operator==(const OrbitPoint&) const = default;
};

/// The orbit points that fall in (N, 2N], in visiting order.
struct Segment {
  std::uint64_t N = 0;
  std::uint64_t j_plus = 0;
  std::vector<OrbitPoint> points;

  std::uint64_t V() const { return points.size(); }
  bool empty() const { return points.empty(); }
  std::uint64_t energy() const;
};

/// Builds a segment from explicit points (synthetic experiments, tests).
Segment make_segment(std::uint64_t N, std::vector<OrbitPoint> points);

/// Crossing of (N, 2N] by the orbit from x. Throws std::invalid_argument when
/// N >= x (no crossing).
Segment orbit_segment(std::int64_t x, std::uint64_t N, const RunOptions& options = {});

/// Every dyadic crossing N = 2^k < x from a single walk, keyed by N.
std::map<std::uint64_t, Segment> dyadic_segments(std::int64_t x,
                                                 const RunOptions& options = {});

/// a(n) for every 0 <= n <= limit via a(n) = 1 + a(n - tau(n)).
std::vector<std::uint32_t> orbit_lengths_upto(std::uint64_t limit);

/// Hard invariants of a finished summary: energy identity, final-step bound,
/// baseline bounds x / max tau <= a(x) <= ceil(x/2), and per-scale checks.
/// Returns one message per violation.
std::vector<std::string> check_summary(const OrbitSummary& summary);

}  // namespace orbitlab
