#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "orbitlab/io.hpp"

namespace orbitlab {

/// Exit codes of the orbitlab binary.
enum ExitCode : int {
  kExitOk = 0,
  kExitInvariant = 1,
  kExitUsage = 2,
  kExitInterrupted = 130,
};

/// `--help` was given; text is the help for the selected (sub)command.
class HelpRequested : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Validated command line. Only the fields of `command` are meaningful.
struct ExperimentConfig {
  std::string command;
  /// recipe name: table1, table2, figures.
  std::string recipe;

  std::vector<std::int64_t> x;
  /// mixing: nullopt means every dyadic scale.
  std::optional<std::uint64_t> scale;
  std::uint64_t q_max = 64;

  double step_tol = 0.2;
  double level_tol = 0.2;
  std::uint64_t min_len = 8;
  double budget = 0.1;

  std::vector<std::int64_t> N;
  /// nullopt: T = round(ln N).
  std::optional<std::uint64_t> T;
  std::uint64_t samples = 500;
  std::vector<double> eps{0.1, 0.2, 0.3};
  std::uint64_t seed = 42;
  double r_factor = 0.9;

  std::uint64_t lo = 1;
  std::uint64_t hi = 100;

  std::string mode = "exact-level";
  std::uint32_t smoothing = 1;
  /// conc-scan: per-scale maxima instead of per-level rows.
  bool maxima = false;

  int K = 7;
  std::uint64_t an_limit = 10'000;
  std::uint64_t hist_N = 0;

  bool dyadic_segments = false;
  std::filesystem::path checkpoint;
  std::uint64_t every = std::uint64_t{1} << 26;
  bool resume = false;

  std::filesystem::path emit;
  std::optional<Format> format;
  std::optional<int> round;
  std::filesystem::path out_dir = "results";
  bool timestamp = false;

  unsigned threads = 1;
  std::uint64_t block_size = kDefaultBlockSize;
  std::uint64_t side_sieve_limit = std::uint64_t{1} << 24;
  std::uint64_t progress_every = 100'000'000;
  bool quiet = false;

  /// Parameters that determine the output, echoed into envelopes. Execution
  /// knobs (threads, block size, paths, progress) are left out so outputs
  /// compare byte for byte across them.
  nlohmann::json echo() const;
  RunOptions run_options() const;
};

/// Parses argv without the program name. Throws UsageError or HelpRequested.
/// `env_threads` is the value of ORBITLAB_THREADS, if set.
ExperimentConfig parse_config(const std::vector<std::string>& args,
                              const std::optional<std::string>& env_threads = std::nullopt);

/// One output file of a command.
struct Artifact {
  std::string name;
  ResultEnvelope envelope;
  Format format = Format::Csv;
};

struct CommandResult {
  std::vector<Artifact> artifacts;
  /// Violated hard invariants; nonempty means exit code 1.
  std::vector<std::string> failures;
};

/// Runs the command. Progress goes to `log` unless config.quiet. Throws the
/// module exceptions and OrbitInterrupted.
CommandResult execute(const ExperimentConfig& config, std::ostream& log,
                      const std::atomic<bool>* stop = nullptr);

/// Full CLI: parse, execute, write artifacts (to --emit, --out-dir, or `out`),
/// and map errors to exit codes.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::atomic<bool>* stop = nullptr);

}  // namespace orbitlab
