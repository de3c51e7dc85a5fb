#include "orbitlab/cli.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "orbitlab/ladder_sampler.hpp"
#include "orbitlab/mixing.hpp"
#include "orbitlab/scale_analytics.hpp"

namespace orbitlab {

using nlohmann::json;

namespace {

constexpr std::int64_t kMaxX = static_cast<std::int64_t>(kMaxSieveValue) / 8;

// Shortest text that reads back as the same double: 0.1 -> "0.1".
std::string shortest(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::uint64_t as_u64(const std::string& text, std::int64_t lo, std::int64_t hi, const char* flag) {
  try {
    return static_cast<std::uint64_t>(parse_integer(text, lo, hi));
  } catch (const UsageError& e) {
    throw UsageError(std::string(flag) + ": " + e.what());
  }
}

double in_range(const std::string& text, double lo, double hi, const char* flag) {
  double v;
  try {
    v = parse_real(text);
  } catch (const UsageError& e) {
    throw UsageError(std::string(flag) + ": " + e.what());
  }
  if (v < lo || v > hi) {
    throw UsageError(std::string(flag) + ": " + text + " outside [" + shortest(lo) + ", " +
                     shortest(hi) + "]");
  }
  return v;
}

std::vector<std::int64_t> int_list(const std::string& text, std::int64_t lo, std::int64_t hi,
                                   const char* flag) {
  std::vector<std::int64_t> out;
  try {
    out = parse_integer_list(text);
  } catch (const UsageError& e) {
    throw UsageError(std::string(flag) + ": " + e.what());
  }
  for (auto v : out) {
    if (v < lo || v > hi) {
      throw UsageError(std::string(flag) + ": " + std::to_string(v) + " outside [" +
                       std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  }
  return out;
}

// Raw flag text, converted and range-checked after CLI11 has parsed.
struct RawFlags {
  std::string x, scale = "all-dyadic", q_max = "64";
  std::string step_tol = "0.2", level_tol = "0.2", min_len = "8", budget = "0.1";
  std::string N, T = "auto", samples = "500", eps = "0.1,0.2,0.3", seed = "42", r_factor = "0.9";
  std::string lo = "1", hi = "100";
  std::string mode = "exact-level", smoothing = "1";
  std::string K = "7", an_limit = "1e4", hist_N = "max";
  std::string segments = "none", checkpoint, every = "2^26";
  std::string emit, format = "auto", round = "none", out_dir = "results";
  std::string threads, block_size = "2^22", side_sieve_limit = "2^24", progress_every = "1e8";
  std::string recipe;
  bool resume = false, timestamp = false, quiet = false, maxima = false;
};

void add_common(CLI::App* s, RawFlags& f) {
  s->add_option("--threads", f.threads,
                "Worker threads (default: $ORBITLAB_THREADS, else hardware concurrency)");
  s->add_option("--block-size", f.block_size, "Sieve block length")->capture_default_str();
  s->add_option("--progress-every", f.progress_every, "Sieved integers between progress lines")
      ->capture_default_str();
  s->add_flag("--quiet", f.quiet, "No progress lines on stderr");
  s->add_flag("--timestamp", f.timestamp, "Record the UTC time in the output envelope");
}

void add_emit(CLI::App* s, RawFlags& f, bool with_round) {
  s->add_option("--emit", f.emit, "Output file (.json for JSON, else CSV); default stdout");
  s->add_option("--format", f.format, "csv, json, or auto (from the --emit extension)")
      ->capture_default_str();
  if (with_round) {
    s->add_option("--round", f.round, "Round ratio columns to this many decimals, ties to even")
        ->capture_default_str();
  }
}

ExperimentConfig convert(const std::string& command, const RawFlags& f,
                         const std::optional<std::string>& env_threads) {
  ExperimentConfig c;
  c.command = command;
  c.quiet = f.quiet;
  c.timestamp = f.timestamp;
  c.resume = f.resume;
  c.checkpoint = f.checkpoint;
  c.emit = f.emit;
  c.out_dir = f.out_dir;

  if (!f.threads.empty()) {
    c.threads = static_cast<unsigned>(as_u64(f.threads, 1, 1024, "--threads"));
  } else if (env_threads && !env_threads->empty()) {
    c.threads = static_cast<unsigned>(as_u64(*env_threads, 1, 1024, "ORBITLAB_THREADS"));
  } else {
    c.threads = std::max(1u, std::thread::hardware_concurrency());
  }
  c.block_size = as_u64(f.block_size, 64, std::int64_t{1} << 32, "--block-size");
  c.side_sieve_limit = as_u64(f.side_sieve_limit, 0, std::int64_t{1} << 34, "--side-sieve-limit");
  c.progress_every = as_u64(f.progress_every, 1, kMaxX, "--progress-every");
  c.every = as_u64(f.every, 1, kMaxX, "--every");

  if (f.format == "csv") {
    c.format = Format::Csv;
  } else if (f.format == "json") {
    c.format = Format::Json;
  } else if (f.format != "auto") {
    throw UsageError("--format: expected csv, json, or auto, got '" + f.format + "'");
  }
  if (f.round != "none") c.round = static_cast<int>(as_u64(f.round, 0, 17, "--round"));

  const bool needs_x = command == "run" || command == "table" || command == "mixing" ||
                       command == "ladders-in-orbit" || command == "conc-scan";
  if (needs_x) {
    if (f.x.empty()) throw UsageError(command + ": --x is required");
    c.x = int_list(f.x, command == "table" ? 10 : 1, kMaxX, "--x");
    if (command != "table" && c.x.size() != 1) {
      throw UsageError(command + ": --x takes a single value");
    }
  }

  if (command == "run") {
    if (f.segments != "none" && f.segments != "dyadic") {
      throw UsageError("--segments: expected none or dyadic, got '" + f.segments + "'");
    }
    c.dyadic_segments = f.segments == "dyadic";
    if (c.resume && c.checkpoint.empty()) throw UsageError("--resume needs --checkpoint");
    if (c.format == Format::Csv || (!c.format && !c.emit.empty() && format_for(c.emit) == Format::Csv)) {
      throw UsageError("run writes JSON only; use an --emit path ending in .json");
    }
  }
  if (command == "mixing") {
    if (f.scale != "all-dyadic") {
      const auto N = as_u64(f.scale, 1, kMaxX, "--scale");
      if (!std::has_single_bit(N)) throw UsageError("--scale: " + f.scale + " is not a power of two");
      if (static_cast<std::int64_t>(N) >= c.x[0]) throw UsageError("--scale must be below --x");
      c.scale = N;
    }
    c.q_max = as_u64(f.q_max, 2, 4096, "--q-max");
  }
  if (command == "ladders-in-orbit") {
    c.step_tol = in_range(f.step_tol, 0, 1, "--step-tol");
    c.level_tol = in_range(f.level_tol, 0, 1, "--level-tol");
    c.min_len = as_u64(f.min_len, 2, kMaxX, "--min-len");
    c.budget = in_range(f.budget, 0, 0.5, "--budget");
  }
  if (command == "ladder-sample" || command == "recipe") {
    c.N = int_list(f.N, 16, kMaxX / 2, "--N");
    if (f.T != "auto") c.T = as_u64(f.T, 1, 1 << 20, "--T");
    c.samples = as_u64(f.samples, 1, 10'000'000, "--samples");
    c.eps = parse_real_list(f.eps);
    for (double e : c.eps) {
      if (e < 0 || e > 1) throw UsageError("--eps: " + shortest(e) + " outside [0, 1]");
    }
    c.seed = as_u64(f.seed, 0, std::numeric_limits<std::int64_t>::max(), "--seed");
    c.r_factor = in_range(f.r_factor, 1e-6, 1, "--r-factor");
  }
  if (command == "conc-scan" || command == "recipe") {
    // The recipe reports both modes; --mode only exists on conc-scan.
    try {
      parse_band_mode(f.mode);
    } catch (const std::invalid_argument&) {
      throw UsageError("--mode: expected exact-level or dyadic-band, got '" + f.mode + "'");
    }
    c.mode = f.mode;
    c.maxima = f.maxima;
    c.smoothing = static_cast<std::uint32_t>(as_u64(f.smoothing, 0, 1000, "--smoothing"));
  }
  if (command == "tau") {
    c.lo = as_u64(f.lo, 1, kMaxX, "--lo");
    c.hi = as_u64(f.hi, 1, kMaxX, "--hi");
    if (c.hi < c.lo) throw UsageError("--hi must be >= --lo");
    if (c.hi - c.lo >= 100'000'000) throw UsageError("tau: at most 10^8 rows");
  }
  if (command == "recipe") {
    c.K = static_cast<int>(as_u64(f.K, 1, 12, "--K"));
    c.an_limit = as_u64(f.an_limit, 2, 100'000'000, "--an-limit");
    c.x = int_list(f.x, 4, kMaxX, "--x");
    if (c.x.size() != 1) throw UsageError("recipe: --x takes a single value");
    if (f.hist_N == "max") {
      c.hist_N = static_cast<std::uint64_t>(*std::ranges::max_element(c.N));
    } else {
      c.hist_N = as_u64(f.hist_N, 16, kMaxX / 2, "--hist-N");
    }
    if (c.format) throw UsageError("recipe: outputs are always CSV");
  }
  return c;
}

ResultEnvelope make_envelope(const ExperimentConfig& c, const std::string& command, json payload,
                             std::vector<std::string> notes = {}) {
  ResultEnvelope e;
  e.command = command;
  e.config = c.echo();
  if (c.timestamp) e.timestamp = utc_timestamp();
  e.build_id = build_id();
  e.payload = std::move(payload);
  e.notes = std::move(notes);
  return e;
}

Artifact table_artifact(const ExperimentConfig& c, const std::string& name,
                        const std::string& command, const Table& t,
                        std::vector<std::string> notes = {}) {
  return {name, make_envelope(c, command, table_payload(t), std::move(notes)), Format::Csv};
}

std::string str(std::uint64_t v) { return std::to_string(v); }
std::string str(std::int64_t v) { return std::to_string(v); }

struct Ctx {
  const ExperimentConfig& c;
  std::ostream& log;
  const std::atomic<bool>* stop;

  RunOptions options(std::int64_t x) const {
    RunOptions o = c.run_options();
    o.stop_requested = stop;
    if (!c.quiet) {
      o.on_progress = [this, x](std::int64_t n, std::uint64_t j, std::uint64_t sieved) {
        log << "orbitlab: x=" << x << " n=" << n << " steps=" << j << " sieved=" << sieved
            << '\n'
            << std::flush;
      };
    }
    return o;
  }
  std::string fmt(double v) const { return format_real(v, c.round); }
};

// ---- table -----------------------------------------------------------------

std::vector<RatioRow> ratio_rows(const Ctx& ctx, const std::vector<std::int64_t>& xs,
                                 std::vector<std::string>& failures,
                                 std::vector<std::string>& notes) {
  std::vector<OrbitLength> lengths;
  for (auto x : xs) {
    const auto s = run_orbit(x, ctx.options(x));
    for (auto& f : check_summary(s)) failures.push_back("x=" + str(x) + ": " + f);
    lengths.push_back({x, s.a_x});
    if (auto note = small_x_li_note(x)) notes.push_back("x=" + str(x) + ": " + *note);
  }
  return ratio_table(lengths);
}

Table ratio_csv(const Ctx& ctx, const std::vector<RatioRow>& rows) {
  Table t{{"x", "a_x", "r_logx", "r_loglog", "r_li"}, {}};
  for (const auto& r : rows) {
    t.add({str(r.x), str(r.a_x), ctx.fmt(r.r_logx), ctx.fmt(r.r_loglog), ctx.fmt(r.r_li)});
  }
  return t;
}

Table an_raw_csv(const Ctx& ctx, std::uint64_t limit) {
  const auto a = orbit_lengths_upto(limit);
  Table t{{"n", "a_n", "r_logx", "r_loglog"}, {}};
  for (std::uint64_t n = 2; n <= limit; ++n) {
    const double ln = std::log(static_cast<double>(n));
    const double an = a[n];
    t.add({str(n), str(std::uint64_t{a[n]}), ctx.fmt(an * ln / static_cast<double>(n)),
           ctx.fmt(an * (ln + std::log(ln)) / static_cast<double>(n))});
  }
  return t;
}

// ---- orbit scans -------------------------------------------------------------

std::vector<Segment> selected_segments(const Ctx& ctx, std::int64_t x,
                                       std::optional<std::uint64_t> only,
                                       std::vector<std::string>& notes) {
  auto all = dyadic_segments(x, ctx.options(x));
  std::vector<Segment> out;
  for (auto& [N, seg] : all) {
    if (only && N != *only) continue;
    if (seg.empty()) {
      notes.push_back("N=" + str(N) + ": orbit skips (N, 2N]");
      continue;
    }
    out.push_back(std::move(seg));
  }
  return out;
}

Table mixing_csv(const Ctx& ctx, const std::vector<Segment>& segs) {
  Table t{{"N", "V", "discrepancy", "discrepancy_norm", "q", "h", "bias", "phase_msq", "res_conc"},
          {}};
  const auto moduli = default_moduli(ctx.c.q_max);
  for (const auto& seg : segs) {
    const auto rep = mixing_report(seg, moduli);
    for (const auto& r : rep.rows) {
      t.add({str(rep.N), str(rep.V), ctx.fmt(rep.discrepancy), ctx.fmt(rep.discrepancy_norm),
             str(r.q), str(r.h), ctx.fmt(r.bias), ctx.fmt(r.phase_msq), ctx.fmt(r.res_conc)});
    }
  }
  return t;
}

Table ladders_csv(const Ctx& ctx, const std::vector<Segment>& segs) {
  Table t{{"N", "start", "r", "T", "m_first", "m_last", "violations"}, {}};
  const LadderOptions opts{ctx.c.step_tol, ctx.c.level_tol, ctx.c.min_len, ctx.c.budget};
  for (const auto& seg : segs) {
    for (const auto& run : detect_ladders(seg, opts)) {
      t.add({str(run.N), str(std::uint64_t{run.start}), str(std::uint64_t{run.r}), str(run.T),
             str(run.values.front()), str(run.values.back()),
             str(std::uint64_t{run.violations})});
    }
  }
  return t;
}

struct ConcTables {
  Table levels{{"N", "V", "partial", "mode", "level", "energy", "frac"}, {}};
  Table maxima{{"N", "V", "partial", "mode", "total_energy", "max_frac", "argmax_level",
                "max_frac_smoothed"},
               {}};
};

void add_conc_rows(const Ctx& ctx, ConcTables& out, std::int64_t x,
                   const std::vector<Segment>& segs, BandMode mode) {
  const auto name = to_string(mode);
  for (const auto& seg : segs) {
    const auto scan = orbit_scale_concentration(seg, seg.N, mode, ctx.c.smoothing);
    const std::string partial = x < static_cast<std::int64_t>(2 * seg.N) ? "1" : "0";
    for (const auto& [level, energy] : scan.level_energy) {
      out.levels.add({str(seg.N), str(seg.V()), partial, name, str(level), str(energy),
                      ctx.fmt(static_cast<double>(energy) / static_cast<double>(seg.N))});
    }
    out.maxima.add({str(seg.N), str(seg.V()), partial, name, str(scan.total_energy),
                    ctx.fmt(scan.max_frac), str(scan.argmax_level),
                    ctx.fmt(scan.max_frac_smoothed)});
  }
}

ConcTables conc_csv(const Ctx& ctx, std::int64_t x, const std::vector<Segment>& segs,
                    const std::vector<BandMode>& modes) {
  ConcTables out;
  for (auto mode : modes) add_conc_rows(ctx, out, x, segs, mode);
  return out;
}

// ---- sampler -------------------------------------------------------------------

SamplerResult sample(const Ctx& ctx, std::uint64_t N) {
  SamplerOptions o;
  o.r_factor = ctx.c.r_factor;
  o.threads = ctx.c.threads;
  o.block_size = ctx.c.block_size;
  const auto T = ctx.c.T.value_or(default_level(N));
  if (!ctx.c.quiet) {
    ctx.log << "orbitlab: sampling N=" << N << " T=" << T << " samples=" << ctx.c.samples << '\n'
            << std::flush;
  }
  return sample_progressions(N, T, ctx.c.samples, ctx.c.eps, ctx.c.seed, o);
}

void add_sample_rows(const Ctx& ctx, Table& t, const SamplerResult& res) {
  for (const auto& s : res.samples) {
    for (std::size_t e = 0; e < res.eps.size(); ++e) {
      t.add({str(s.N), str(s.T), str(s.index), str(s.seed), str(s.a), str(s.r),
             shortest(res.eps[e]), ctx.fmt(s.R[e]), str(s.total_energy)});
    }
  }
}

Table sample_table() {
  return {{"N", "T", "sample", "seed", "a", "r", "eps", "R", "total_energy"}, {}};
}

Table hist_csv(const Ctx& ctx, const SamplerResult& res) {
  Table t{{"N", "T", "tau", "weight"}, {}};
  for (const auto& [tau, w] : tau_histogram(res.samples)) {
    t.add({str(res.N), str(res.T), str(std::uint64_t{tau}), ctx.fmt(w)});
  }
  return t;
}

// ---- commands -----------------------------------------------------------------

CommandResult cmd_run(const Ctx& ctx) {
  const auto x = ctx.c.x[0];
  auto opts = ctx.options(x);
  OrbitSummary s;
  if (ctx.c.resume && std::filesystem::exists(ctx.c.checkpoint)) {
    s = resume_orbit(ctx.c.checkpoint, opts);
    if (s.x != x) {
      throw UsageError("checkpoint " + ctx.c.checkpoint.string() + " holds x=" + str(s.x) +
                       ", not " + str(x));
    }
  } else {
    s = run_orbit(x, opts);
  }
  CommandResult r;
  r.failures = check_summary(s);
  r.artifacts.push_back(
      {"summary.json", make_envelope(ctx.c, "run", to_json(s, ctx.c.dyadic_segments)), Format::Json});
  return r;
}

CommandResult cmd_table(const Ctx& ctx) {
  CommandResult r;
  std::vector<std::string> notes;
  const auto rows = ratio_rows(ctx, ctx.c.x, r.failures, notes);
  r.artifacts.push_back(table_artifact(ctx.c, "table1.csv", "table", ratio_csv(ctx, rows), notes));
  return r;
}

CommandResult cmd_mixing(const Ctx& ctx) {
  CommandResult r;
  std::vector<std::string> notes;
  const auto segs = selected_segments(ctx, ctx.c.x[0], ctx.c.scale, notes);
  r.artifacts.push_back(table_artifact(ctx.c, "mixing.csv", "mixing", mixing_csv(ctx, segs), notes));
  return r;
}

CommandResult cmd_ladders(const Ctx& ctx) {
  CommandResult r;
  std::vector<std::string> notes;
  const auto segs = selected_segments(ctx, ctx.c.x[0], std::nullopt, notes);
  r.artifacts.push_back(
      table_artifact(ctx.c, "runs.csv", "ladders-in-orbit", ladders_csv(ctx, segs), notes));
  return r;
}

CommandResult cmd_ladder_sample(const Ctx& ctx) {
  CommandResult r;
  Table t = sample_table();
  std::vector<std::string> notes;
  for (auto N : ctx.c.N) {
    const auto res = sample(ctx, static_cast<std::uint64_t>(N));
    add_sample_rows(ctx, t, res);
    for (std::size_t e = 0; e < res.eps.size(); ++e) {
      notes.push_back("N=" + str(N) + " T=" + str(res.T) + " max R_" + shortest(res.eps[e]) +
                      " = " + format_real(res.max_R[e]));
    }
  }
  r.artifacts.push_back(table_artifact(ctx.c, "table2.csv", "ladder-sample", t, notes));
  return r;
}

CommandResult cmd_conc_scan(const Ctx& ctx) {
  CommandResult r;
  std::vector<std::string> notes;
  const auto x = ctx.c.x[0];
  const auto segs = selected_segments(ctx, x, std::nullopt, notes);
  const auto tables = conc_csv(ctx, x, segs, {parse_band_mode(ctx.c.mode)});
  r.artifacts.push_back(
      table_artifact(ctx.c, "conc.csv", "conc-scan",
                     ctx.c.maxima ? tables.maxima : tables.levels, notes));
  return r;
}

CommandResult cmd_tau(const Ctx& ctx) {
  Table t{{"n", "tau"}, {}};
  const SieveOptions sieve{ctx.c.block_size, SieveMethod::Hyperbola};
  for (std::uint64_t lo = ctx.c.lo; lo <= ctx.c.hi; lo += sieve.block_size) {
    const auto block = sieve_block(lo, std::min(ctx.c.hi + 1, lo + sieve.block_size), sieve);
    for (std::uint64_t n = block.lo; n < block.hi; ++n) t.add({str(n), str(std::uint64_t{block[n]})});
  }
  CommandResult r;
  r.artifacts.push_back(table_artifact(ctx.c, "tau.csv", "tau", t));
  return r;
}

void recipe_table1(const Ctx& ctx, CommandResult& r) {
  std::vector<std::int64_t> xs;
  std::int64_t p = 1;
  for (int k = 1; k <= ctx.c.K; ++k) xs.push_back(p *= 10);
  std::vector<std::string> notes;
  const auto rows = ratio_rows(ctx, xs, r.failures, notes);
  r.artifacts.push_back(
      table_artifact(ctx.c, "table1.csv", "recipe table1", ratio_csv(ctx, rows), notes));
  r.artifacts.push_back(
      table_artifact(ctx.c, "an_raw.csv", "recipe table1", an_raw_csv(ctx, ctx.c.an_limit)));
}

void recipe_table2(const Ctx& ctx, CommandResult& r, bool with_rows) {
  std::vector<std::string> cols{"N", "T", "samples", "r", "seed"};
  for (double e : ctx.c.eps) cols.push_back("max_R_" + shortest(e));
  Table summary{cols, {}};
  Table rows = sample_table();
  std::optional<SamplerResult> hist_source;
  for (auto N : with_rows ? ctx.c.N : std::vector<std::int64_t>{}) {
    auto res = sample(ctx, static_cast<std::uint64_t>(N));
    std::vector<std::string> row{str(N), str(res.T), str(ctx.c.samples),
                                 str(res.samples.front().r), str(ctx.c.seed)};
    for (double m : res.max_R) row.push_back(ctx.fmt(m));
    summary.add(std::move(row));
    if (with_rows) add_sample_rows(ctx, rows, res);
    if (static_cast<std::uint64_t>(N) == ctx.c.hist_N) hist_source = std::move(res);
  }
  if (with_rows) {
    r.artifacts.push_back(table_artifact(ctx.c, "table2.csv", "recipe table2", summary));
    r.artifacts.push_back(table_artifact(ctx.c, "table2_samples.csv", "recipe table2", rows));
  }
  if (!hist_source) hist_source = sample(ctx, ctx.c.hist_N);
  r.artifacts.push_back(
      table_artifact(ctx.c, "tau_hist.csv", "recipe " + ctx.c.recipe, hist_csv(ctx, *hist_source)));
}

void recipe_conc(const Ctx& ctx, CommandResult& r) {
  std::vector<std::string> notes;
  const auto x = ctx.c.x[0];
  const auto segs = selected_segments(ctx, x, std::nullopt, notes);
  // Both readings of "tau near T" are reported; the mode column tells them apart.
  auto tables = conc_csv(ctx, x, segs, {BandMode::ExactLevel, BandMode::DyadicBand});
  r.artifacts.push_back(table_artifact(ctx.c, "conc.csv", "recipe figures", tables.levels, notes));
  r.artifacts.push_back(table_artifact(ctx.c, "conc_max.csv", "recipe figures", tables.maxima));
}

CommandResult cmd_recipe(const Ctx& ctx) {
  CommandResult r;
  if (ctx.c.recipe == "table1") {
    recipe_table1(ctx, r);
  } else if (ctx.c.recipe == "table2") {
    recipe_table2(ctx, r, true);
  } else {
    recipe_table1(ctx, r);
    recipe_table2(ctx, r, false);
    recipe_conc(ctx, r);
  }
  return r;
}

}  // namespace

json ExperimentConfig::echo() const {
  json j{{"command", command}};
  auto ints = [](const std::vector<std::int64_t>& v) {
    json a = json::array();
    for (auto x : v) a.push_back(std::to_string(x));
    return a;
  };
  if (command == "run" || command == "table" || command == "mixing" ||
      command == "ladders-in-orbit" || command == "conc-scan") {
    j["x"] = ints(x);
  }
  if (command == "run") {
    j["segments"] = dyadic_segments ? "dyadic" : "none";
    j["side_sieve_limit"] = std::to_string(side_sieve_limit);
  }
  if (command == "mixing") {
    j["scale"] = scale ? json(std::to_string(*scale)) : json("all-dyadic");
    j["q_max"] = q_max;
  }
  if (command == "ladders-in-orbit") {
    j["step_tol"] = step_tol;
    j["level_tol"] = level_tol;
    j["min_len"] = min_len;
    j["budget"] = budget;
  }
  if (command == "ladder-sample" || command == "recipe") {
    j["N"] = ints(N);
    j["T"] = T ? json(*T) : json("auto");
    j["samples"] = samples;
    j["eps"] = eps;
    j["seed"] = std::to_string(seed);
    j["r_factor"] = r_factor;
  }
  if (command == "conc-scan") {
    j["mode"] = mode;
    j["maxima"] = maxima;
  }
  if (command == "conc-scan" || command == "recipe") {
    j["smoothing"] = smoothing;
  }
  if (command == "tau") {
    j["lo"] = std::to_string(lo);
    j["hi"] = std::to_string(hi);
  }
  if (command == "recipe") {
    j["recipe"] = recipe;
    j["K"] = K;
    j["an_limit"] = an_limit;
    j["hist_N"] = std::to_string(hist_N);
    j["x"] = ints(x);
  }
  if (round) j["round"] = *round;
  return j;
}

RunOptions ExperimentConfig::run_options() const {
  RunOptions o;
  o.block_size = block_size;
  o.threads = threads;
  o.side_sieve_limit = side_sieve_limit;
  o.progress_every = progress_every;
  if (command == "run") {
    o.checkpoint_path = checkpoint;
    o.checkpoint_every = every;
  }
  return o;
}

ExperimentConfig parse_config(const std::vector<std::string>& args,
                              const std::optional<std::string>& env_threads) {
  CLI::App app{"Divisor-function orbit workbench: n -> n - tau(n).", "orbitlab"};
  app.require_subcommand(1, 1);
  RawFlags f;

  auto* run = app.add_subcommand("run", "Walk one orbit and report its summary");
  run->add_option("--x", f.x, "Starting value")->required();
  run->add_option("--segments", f.segments, "none or dyadic: include per-scale records")
      ->capture_default_str();
  run->add_option("--checkpoint", f.checkpoint, "State file written during the walk");
  run->add_option("--every", f.every, "Steps between checkpoints")->capture_default_str();
  run->add_flag("--resume", f.resume, "Continue from --checkpoint if it exists");
  run->add_option("--side-sieve-limit", f.side_sieve_limit,
                  "How far above x the sieve for Delta_N may reach")
      ->capture_default_str();
  add_emit(run, f, false);

  auto* table = app.add_subcommand("table", "Orbit lengths against the log x, log log x and li models");
  table->add_option("--x", f.x, "List of x >= 10, e.g. 10,1e2,...,1e7")->required();
  add_emit(table, f, true);

  auto* mixing = app.add_subcommand("mixing", "Residue, divisor and Fourier diagnostics per scale");
  mixing->add_option("--x", f.x, "Starting value")->required();
  mixing->add_option("--scale", f.scale, "Power of two N below x, or all-dyadic")
      ->capture_default_str();
  mixing->add_option("--q-max", f.q_max, "Largest modulus (primes to 101 always included)")
      ->capture_default_str();
  add_emit(mixing, f, true);

  auto* ladders = app.add_subcommand("ladders-in-orbit", "Near-arithmetic runs inside orbit segments");
  ladders->add_option("--x", f.x, "Starting value")->required();
  ladders->add_option("--step-tol", f.step_tol, "Relative step tolerance")->capture_default_str();
  ladders->add_option("--level-tol", f.level_tol, "Relative tau tolerance")->capture_default_str();
  ladders->add_option("--min-len", f.min_len, "Shortest reported run")->capture_default_str();
  ladders->add_option("--budget", f.budget, "Fraction of indices allowed to violate")
      ->capture_default_str();
  add_emit(ladders, f, false);

  auto* sampler = app.add_subcommand("ladder-sample", "Concentration ratios along random progressions");
  sampler->add_option("--N", f.N, "Scale or list of scales")->required();
  sampler->add_option("--T", f.T, "Step, or auto for round(ln N)")->capture_default_str();
  sampler->add_option("--samples", f.samples, "Progressions per scale")->capture_default_str();
  sampler->add_option("--eps", f.eps, "Band half-widths, comma separated")->capture_default_str();
  sampler->add_option("--seed", f.seed, "Master seed")->capture_default_str();
  sampler->add_option("--r-factor", f.r_factor, "Length r = floor(factor * floor(N / T))")
      ->capture_default_str();
  add_emit(sampler, f, true);

  auto* conc = app.add_subcommand("conc-scan", "Largest single-level energy fraction per scale");
  conc->add_option("--x", f.x, "Starting value")->required();
  conc->add_option("--mode", f.mode, "exact-level or dyadic-band")->capture_default_str();
  conc->add_option("--smoothing", f.smoothing, "Exact-level window half-width (max_frac_smoothed)")
      ->capture_default_str();
  conc->add_flag("--max", f.maxima, "One row per N with max_frac and max_frac_smoothed");
  add_emit(conc, f, true);

  auto* tau = app.add_subcommand("tau", "Divisor counts for lo <= n <= hi");
  tau->add_option("--lo", f.lo, "First n")->capture_default_str();
  tau->add_option("--hi", f.hi, "Last n")->capture_default_str();
  add_emit(tau, f, false);

  auto* recipe = app.add_subcommand("recipe", "Regenerate the table and figure CSVs");
  recipe->add_option("name", f.recipe, "table1, table2, or figures")
      ->required()
      ->check(CLI::IsMember({"table1", "table2", "figures"}));
  recipe->add_option("--out-dir", f.out_dir, "Directory for the CSVs")->capture_default_str();
  recipe->add_option("--K", f.K, "table1: x = 10^k for k <= K")->capture_default_str();
  recipe->add_option("--an-limit", f.an_limit, "a(n) curve for n <= this")->capture_default_str();
  f.N = "1e4,3e4,1e5,1e6,1e7,3e7,1e8";
  recipe->add_option("--N", f.N, "table2 scales")->capture_default_str();
  recipe->add_option("--samples", f.samples, "Progressions per scale")->capture_default_str();
  recipe->add_option("--eps", f.eps, "Band half-widths")->capture_default_str();
  recipe->add_option("--seed", f.seed, "Master seed")->capture_default_str();
  recipe->add_option("--r-factor", f.r_factor, "Progression length factor")->capture_default_str();
  recipe->add_option("--hist-N", f.hist_N, "Scale of the tau histogram (max: largest --N)")
      ->capture_default_str();
  f.x = "1e7";
  recipe->add_option("--x", f.x, "Orbit start for the concentration scan")->capture_default_str();
  recipe->add_option("--smoothing", f.smoothing, "Exact-level window half-width")
      ->capture_default_str();
  recipe->add_option("--round", f.round, "Round ratio columns")->capture_default_str();

  for (auto* s : {run, table, mixing, ladders, sampler, conc, tau, recipe}) add_common(s, f);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::ostringstream text;
    app.exit(e, text, text);
    throw HelpRequested(text.str());
  } catch (const CLI::CallForAllHelp& e) {
    std::ostringstream text;
    app.exit(e, text, text);
    throw HelpRequested(text.str());
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  const auto* chosen = app.get_subcommands().front();
  auto c = convert(chosen->get_name(), f, env_threads);
  if (chosen == recipe) c.recipe = f.recipe;
  return c;
}

CommandResult execute(const ExperimentConfig& config, std::ostream& log,
                      const std::atomic<bool>* stop) {
  const Ctx ctx{config, log, stop};
  const auto& cmd = config.command;
  if (cmd == "run") return cmd_run(ctx);
  if (cmd == "table") return cmd_table(ctx);
  if (cmd == "mixing") return cmd_mixing(ctx);
  if (cmd == "ladders-in-orbit") return cmd_ladders(ctx);
  if (cmd == "ladder-sample") return cmd_ladder_sample(ctx);
  if (cmd == "conc-scan") return cmd_conc_scan(ctx);
  if (cmd == "tau") return cmd_tau(ctx);
  if (cmd == "recipe") return cmd_recipe(ctx);
  throw UsageError("unknown command '" + cmd + "'");
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::atomic<bool>* stop) {
  ExperimentConfig config;
  try {
    std::optional<std::string> env;
    if (const char* t = std::getenv("ORBITLAB_THREADS")) env = t;
    config = parse_config(args, env);
  } catch (const HelpRequested& h) {
    out << h.what();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "orbitlab: " << e.what() << "\nRun 'orbitlab --help' for usage.\n";
    return kExitUsage;
  }

  try {
    const auto result = execute(config, err, stop);
    for (const auto& a : result.artifacts) {
      if (config.command == "recipe") {
        const auto path = config.out_dir / a.name;
        emit(a.envelope, path, a.format);
        if (!config.quiet) err << "orbitlab: wrote " << path.string() << '\n';
      } else if (!config.emit.empty()) {
        emit(a.envelope, config.emit, config.format.value_or(format_for(config.emit)));
      } else {
        out << render(a.envelope, config.format.value_or(a.format));
      }
    }
    for (const auto& f : result.failures) err << "orbitlab: invariant violated: " << f << '\n';
    return result.failures.empty() ? kExitOk : kExitInvariant;
  } catch (const OrbitInterrupted& e) {
    err << "orbitlab: " << e.what() << '\n';
    return kExitInterrupted;
  } catch (const UsageError& e) {
    err << "orbitlab: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    // Parameter combinations the modules reject, e.g. r*T >= N.
    err << "orbitlab: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "orbitlab: error: " << e.what() << '\n';
    return kExitInvariant;
  }
}

}  // namespace orbitlab
