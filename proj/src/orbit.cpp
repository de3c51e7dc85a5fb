#include "orbitlab/orbit.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <system_error>

namespace orbitlab {

namespace {

constexpr std::array<char, 8> kCheckpointMagic = {'O', 'R', 'B', 'I', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Index i of the interval D_i = (2^{i-1}, 2^i] containing n >= 1; D_0 = {1}.
int dyadic_interval(std::uint64_t n) {
  return n <= 1 ? 0 : static_cast<int>(std::bit_width(n - 1));
}

// Scale k with 2^k < n <= 2^{k+1}, for n >= 2.
int dyadic_scale(std::uint64_t n) { return static_cast<int>(std::bit_width(n - 1)) - 1; }

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes_.push_back(static_cast<char>(u & 0xff));
      if constexpr (sizeof(T) > 1) u >>= 8;
    }
  }
  template <typename T>
  void put_all(const std::vector<T>& values) {
    for (T v : values) put(v);
  }
  void raw(const char* data, std::size_t n) { bytes_.append(data, n); }
  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw CheckpointError("checkpoint truncated");
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  template <typename T>
  std::vector<T> get_all(std::size_t n) {
    std::vector<T> out(n);
    for (auto& v : out) v = get<T>();
    return out;
  }
  std::size_t position() const { return pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

double DyadicRecord::var_tau() const {
  if (V == 0) return 0.0;
  const auto v = static_cast<long double>(V);
  const auto e = static_cast<long double>(energy);
  const long double num = v * static_cast<long double>(sum_tau_sq) - e * e;
  return static_cast<double>(num / (v * v));
}

OrbitInterrupted::OrbitInterrupted(const std::filesystem::path& checkpoint)
    : std::runtime_error("orbit walk interrupted; state saved to " +
                         (checkpoint.empty() ? std::string("<none>") : checkpoint.string())) {}

std::int64_t orbit_step(std::int64_t n) {
  if (n <= 0) {
    throw std::invalid_argument("orbit_step: n must be positive, got " + std::to_string(n));
  }
  return n - static_cast<std::int64_t>(divisor_count(n));
}

struct OrbitWalk::State {
  std::int64_t x = 0;
  std::int64_t n = 0;
  std::uint64_t j = 0;
  std::uint64_t energy = 0;
  std::uint32_t last_tau = 0;
  std::uint32_t max_tau = 0;
  // Scales k = 0..kmax with 2^kmax < x; -1 when x = 1.
  std::int32_t kmax = -1;
  // Highest k whose j_plus is still unset; runs down to -1 (threshold n <= 1).
  std::int32_t pending_k = -1;
  std::uint64_t side_len = 0;
  // Every n in [scanned_lo, x] has been folded into interval_max.
  std::uint64_t scanned_lo = 0;
  bool done = false;
  // Indexed by k + 1 for k in [-1, kmax].
  std::vector<std::uint64_t> j_plus;
  std::vector<std::int64_t> n_at;
  // Indexed by k.
  std::vector<std::uint64_t> count, sum, sum_sq;
  // Indexed by dyadic interval i in [0, kmax + 2].
  std::vector<std::uint16_t> interval_max;

  void init(std::int64_t start) {
    x = start;
    n = start;
    scanned_lo = static_cast<std::uint64_t>(start) + 1;
    kmax = start >= 2 ? dyadic_scale(static_cast<std::uint64_t>(start)) : -1;
    pending_k = kmax;
    const auto scales = static_cast<std::size_t>(kmax + 1);
    j_plus.assign(scales + 1, 0);
    n_at.assign(scales + 1, 0);
    count.assign(scales, 0);
    sum.assign(scales, 0);
    sum_sq.assign(scales, 0);
    interval_max.assign(scales + 2, 0);
    arrive();
  }

  // Records the boundaries crossed on arriving at index j with value n.
  void arrive() {
    while (pending_k >= -1 && n <= (std::int64_t{1} << (pending_k + 1))) {
      j_plus[pending_k + 1] = j;
      n_at[pending_k + 1] = n;
      --pending_k;
    }
  }

  void fold(const TauBlock& block, std::uint64_t lo, std::uint64_t hi) {
    for (std::uint64_t start = lo; start < hi;) {
      const int i = dyadic_interval(start);
      const std::uint64_t end = std::min(hi, (std::uint64_t{1} << i) + 1);
      if (i >= static_cast<int>(interval_max.size())) break;
      const auto first = block.counts.begin() + static_cast<std::ptrdiff_t>(start - block.lo);
      const auto last = block.counts.begin() + static_cast<std::ptrdiff_t>(end - block.lo);
      interval_max[i] = std::max(interval_max[i], *std::max_element(first, last));
      start = end;
    }
  }

  void fold_walk_block(const TauBlock& block) {
    const std::uint64_t hi = std::min(block.hi, scanned_lo);
    if (block.lo < hi) {
      fold(block, block.lo, hi);
      const auto first = block.counts.begin();
      const auto last = first + static_cast<std::ptrdiff_t>(hi - block.lo);
      max_tau = std::max<std::uint32_t>(max_tau, *std::max_element(first, last));
      scanned_lo = block.lo;
    }
  }

  std::string serialize() const {
    Writer w;
    w.raw(kCheckpointMagic.data(), kCheckpointMagic.size());
    w.put(kCheckpointVersion);
    w.put(x);
    w.put(n);
    w.put(j);
    w.put(energy);
    w.put(last_tau);
    w.put(max_tau);
    w.put(kmax);
    w.put(pending_k);
    w.put(side_len);
    w.put(scanned_lo);
    w.put(static_cast<std::uint8_t>(done));
    w.put_all(j_plus);
    w.put_all(n_at);
    w.put_all(count);
    w.put_all(sum);
    w.put_all(sum_sq);
    w.put_all(interval_max);
    w.put(fnv1a(w.bytes()));
    return std::move(w.bytes());
  }

  static State deserialize(const std::string& bytes) {
    if (bytes.size() < kCheckpointMagic.size() + 12 ||
        !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin())) {
      throw CheckpointError("not an orbit checkpoint (bad magic)");
    }
    const std::string body = bytes.substr(0, bytes.size() - 8);
    Reader tail(bytes);
    Reader r(body);
    for (std::size_t i = 0; i < kCheckpointMagic.size(); ++i) r.get<std::uint8_t>();
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint version " + std::to_string(version) +
                            " does not match expected " + std::to_string(kCheckpointVersion));
    }
    std::uint64_t stored_sum = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      stored_sum |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[body.size() + i]))
                    << (8 * i);
    }
    if (stored_sum != fnv1a(body)) throw CheckpointError("checkpoint checksum mismatch");

    State s;
    s.x = r.get<std::int64_t>();
    s.n = r.get<std::int64_t>();
    s.j = r.get<std::uint64_t>();
    s.energy = r.get<std::uint64_t>();
    s.last_tau = r.get<std::uint32_t>();
    s.max_tau = r.get<std::uint32_t>();
    s.kmax = r.get<std::int32_t>();
    s.pending_k = r.get<std::int32_t>();
    s.side_len = r.get<std::uint64_t>();
    s.scanned_lo = r.get<std::uint64_t>();
    s.done = r.get<std::uint8_t>() != 0;
    if (s.x < 1 || s.kmax < -1 || s.kmax > 62 || s.pending_k < -2 || s.pending_k > s.kmax ||
        s.n > s.x) {
      throw CheckpointError("checkpoint fields out of range");
    }
    const auto scales = static_cast<std::size_t>(s.kmax + 1);
    s.j_plus = r.get_all<std::uint64_t>(scales + 1);
    s.n_at = r.get_all<std::int64_t>(scales + 1);
    s.count = r.get_all<std::uint64_t>(scales);
    s.sum = r.get_all<std::uint64_t>(scales);
    s.sum_sq = r.get_all<std::uint64_t>(scales);
    s.interval_max = r.get_all<std::uint16_t>(scales + 2);
    if (r.position() != body.size()) throw CheckpointError("checkpoint has trailing bytes");
    return s;
  }
};

OrbitWalk::OrbitWalk(std::int64_t x, RunOptions options)
    : state_(std::make_unique<State>()), options_(std::move(options)) {
  if (x < 1) throw std::invalid_argument("run_orbit: x must be >= 1, got " + std::to_string(x));
  if (static_cast<std::uint64_t>(x) >= kMaxSieveValue / 8) {
    throw std::invalid_argument("run_orbit: x too large for 16-bit divisor counts");
  }
  state_->init(x);
  // tau above x, needed for delta_N on the top scales.
  const auto ux = static_cast<std::uint64_t>(x);
  if (state_->kmax >= 0) {
    const std::uint64_t top = std::uint64_t{1} << (state_->kmax + 2);
    state_->side_len = top > ux ? std::min(options_.side_sieve_limit, top - ux) : 0;
    const auto sieve = options_.sieve();
    const std::uint64_t end = ux + 1 + state_->side_len;
    for (std::uint64_t lo = ux + 1; lo < end; lo += sieve.block_size) {
      const auto block = sieve_block(lo, std::min(end, lo + sieve.block_size), sieve);
      state_->fold(block, block.lo, block.hi);
    }
  }
  stream_ = std::make_unique<DescendingBlockStream>(ux + 1, options_.sieve(), options_.threads);
}

OrbitWalk::OrbitWalk(std::unique_ptr<State> state, RunOptions options)
    : state_(std::move(state)), options_(std::move(options)) {
  if (!state_->done) {
    stream_ = std::make_unique<DescendingBlockStream>(
        static_cast<std::uint64_t>(state_->n) + 1, options_.sieve(), options_.threads);
  }
}

OrbitWalk::~OrbitWalk() = default;
OrbitWalk::OrbitWalk(OrbitWalk&&) noexcept = default;
OrbitWalk& OrbitWalk::operator=(OrbitWalk&&) noexcept = default;

OrbitWalk OrbitWalk::resume(const std::filesystem::path& state_file, RunOptions options) {
  std::ifstream in(state_file, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + state_file.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return OrbitWalk(std::make_unique<State>(State::deserialize(bytes)), std::move(options));
  } catch (const CheckpointError& e) {
    throw CheckpointError(state_file.string() + ": " + e.what());
  }
}

bool OrbitWalk::done() const { return state_->done; }
std::int64_t OrbitWalk::current() const { return state_->n; }
std::uint64_t OrbitWalk::steps() const { return state_->j; }

bool OrbitWalk::advance(std::uint64_t max_steps) {
  State& s = *state_;
  std::uint64_t taken = 0;
  std::uint64_t sieved_since_report = 0;
  while (!s.done && taken < max_steps) {
    if (block_.counts.empty() || s.n < static_cast<std::int64_t>(block_.lo)) {
      if (options_.stop_requested && options_.stop_requested->load()) break;
      block_ = stream_->next();
      s.fold_walk_block(block_);
      sieved_since_report += block_.size();
      if (options_.on_progress && sieved_since_report >= options_.progress_every) {
        options_.on_progress(s.n, s.j, static_cast<std::uint64_t>(s.x) + 1 - block_.lo);
        sieved_since_report = 0;
      }
    }
    const auto lo = static_cast<std::int64_t>(block_.lo);
    while (s.n >= lo && taken < max_steps) {
      const std::uint32_t tau = block_.counts[static_cast<std::uint64_t>(s.n - lo)];
      if (s.n >= 2) {
        const int k = dyadic_scale(static_cast<std::uint64_t>(s.n));
        ++s.count[k];
        s.sum[k] += tau;
        s.sum_sq[k] += std::uint64_t{tau} * tau;
      }
      if (options_.on_visit) options_.on_visit(s.j, s.n, tau);
      s.energy += tau;
      s.last_tau = tau;
      s.n -= tau;
      ++s.j;
      ++taken;
      s.arrive();
      if (s.n <= 0) {
        finalize();
        break;
      }
    }
  }
  return s.done;
}

void OrbitWalk::finalize() {
  State& s = *state_;
  const auto sieve = options_.sieve();
  for (std::uint64_t hi = s.scanned_lo; hi > 1;) {
    const std::uint64_t lo = hi > sieve.block_size ? hi - sieve.block_size : 1;
    s.fold_walk_block(sieve_block(lo, hi, sieve));
    hi = lo;
  }
  s.done = true;
  stream_.reset();
  block_ = TauBlock{};
}

OrbitSummary OrbitWalk::summary() const {
  const State& s = *state_;
  if (!s.done) throw std::logic_error("OrbitWalk::summary: walk not finished");
  OrbitSummary out;
  out.x = s.x;
  out.a_x = s.j;
  out.n_final = s.n;
  out.total_energy = s.energy;
  out.last_tau = s.last_tau;
  out.max_tau = s.max_tau;
  const auto ux = static_cast<std::uint64_t>(s.x);
  for (int k = 0; k <= s.kmax; ++k) {
    DyadicRecord r;
    r.N = std::uint64_t{1} << k;
    r.j_plus = s.j_plus[k + 1];
    r.j_minus = s.j_plus[k];
    r.V = r.j_minus - r.j_plus;
    r.energy = s.sum[k];
    r.sum_tau_sq = s.sum_sq[k];
    if (r.V != s.count[k] ||
        r.energy != static_cast<std::uint64_t>(s.n_at[k + 1] - s.n_at[k])) {
      throw std::logic_error("orbit walk: inconsistent crossing accumulators at N=" +
                             std::to_string(r.N));
    }
    r.delta_N = std::max({s.interval_max[k], s.interval_max[k + 1], s.interval_max[k + 2]});
    r.delta_exact = (std::uint64_t{1} << (k + 2)) <= ux + s.side_len;
    r.partial = ux < 2 * r.N;
    r.skipped = r.V == 0;
    out.dyadic.push_back(r);
  }
  return out;
}

void OrbitWalk::save(const std::filesystem::path& path) const {
  const std::string bytes = state_->serialize();
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw CheckpointError("short write to checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw CheckpointError("cannot move checkpoint into place at " + path.string());
  }
}

namespace {

OrbitSummary drive(OrbitWalk& walk, const RunOptions& options) {
  const bool checkpointing = !options.checkpoint_path.empty();
  const std::uint64_t chunk = std::max<std::uint64_t>(1, options.checkpoint_every);
  while (!walk.advance(chunk)) {
    if (options.stop_requested && options.stop_requested->load()) {
      if (checkpointing) walk.save(options.checkpoint_path);
      throw OrbitInterrupted(options.checkpoint_path);
    }
    if (checkpointing) walk.save(options.checkpoint_path);
  }
  if (checkpointing) walk.save(options.checkpoint_path);
  return walk.summary();
}

}  // namespace

OrbitSummary run_orbit(std::int64_t x, const RunOptions& options) {
  OrbitWalk walk(x, options);
  return drive(walk, options);
}

OrbitSummary resume_orbit(const std::filesystem::path& state_file, const RunOptions& options) {
  auto walk = OrbitWalk::resume(state_file, options);
  if (walk.done()) return walk.summary();
  return drive(walk, options);
}

std::uint64_t Segment::energy() const {
  std::uint64_t e = 0;
  for (const auto& p : points) e += p.tau;
  return e;
}

Segment make_segment(std::uint64_t N, std::vector<OrbitPoint> points) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].tau < 1) throw std::invalid_argument("make_segment: tau must be >= 1");
    if (i > 0 && points[i].n >= points[i - 1].n) {
      throw std::invalid_argument("make_segment: values must strictly decrease");
    }
  }
  return Segment{N, 0, std::move(points)};
}

Segment orbit_segment(std::int64_t x, std::uint64_t N, const RunOptions& options) {
  if (N < 1 || static_cast<std::int64_t>(N) >= x) {
    throw std::invalid_argument("orbit_segment: orbit from x=" + std::to_string(x) +
                                " does not cross (" + std::to_string(N) + ", " +
                                std::to_string(2 * N) + "]");
  }
  Segment seg{N, 0, {}};
  bool found_plus = false;
  const auto lo = static_cast<std::int64_t>(N);
  const auto hi = static_cast<std::int64_t>(2 * N);
  RunOptions opts = options;
  opts.checkpoint_path.clear();
  opts.on_visit = [&, user = options.on_visit](std::uint64_t j, std::int64_t n, std::uint32_t tau) {
    if (!found_plus && n <= hi) {
      seg.j_plus = j;
      found_plus = true;
    }
    if (n > lo && n <= hi) seg.points.push_back({n, tau});
    if (user) user(j, n, tau);
  };
  const auto summary = run_orbit(x, opts);
  if (!found_plus) seg.j_plus = summary.a_x;
  return seg;
}

std::map<std::uint64_t, Segment> dyadic_segments(std::int64_t x, const RunOptions& options) {
  std::vector<Segment> by_scale;
  RunOptions opts = options;
  opts.checkpoint_path.clear();
  opts.on_visit = [&, user = options.on_visit](std::uint64_t j, std::int64_t n, std::uint32_t tau) {
    if (n >= 2) {
      const auto k = static_cast<std::size_t>(dyadic_scale(static_cast<std::uint64_t>(n)));
      if (by_scale.size() <= k) by_scale.resize(k + 1);
      by_scale[k].points.push_back({n, tau});
    }
    if (user) user(j, n, tau);
  };
  const auto summary = run_orbit(x, opts);
  std::map<std::uint64_t, Segment> out;
  for (const auto& rec : summary.dyadic) {
    const auto k = static_cast<std::size_t>(std::countr_zero(rec.N));
    Segment seg{rec.N, rec.j_plus, {}};
    if (k < by_scale.size()) seg.points = std::move(by_scale[k].points);
    out.emplace(rec.N, std::move(seg));
  }
  return out;
}

std::vector<std::uint32_t> orbit_lengths_upto(std::uint64_t limit) {
  std::vector<std::uint32_t> a(limit + 1, 0);
  const SieveOptions sieve;
  for (std::uint64_t lo = 1; lo <= limit; lo += sieve.block_size) {
    const auto block = sieve_block(lo, std::min(limit + 1, lo + sieve.block_size), sieve);
    for (std::uint64_t n = block.lo; n < block.hi; ++n) {
      const std::uint64_t tau = block[n];
      a[n] = 1 + (tau < n ? a[n - tau] : 0);
    }
  }
  return a;
}

std::vector<std::string> check_summary(const OrbitSummary& s) {
  std::vector<std::string> failures;
  auto fail = [&](std::string msg) { failures.push_back("x=" + std::to_string(s.x) + ": " + std::move(msg)); };
  if (static_cast<std::int64_t>(s.total_energy) != s.x - s.n_final) {
    fail("energy identity violated: total_energy != x - n_final");
  }
  if (s.n_final > 0 || s.n_final <= -static_cast<std::int64_t>(s.last_tau)) {
    fail("final value " + std::to_string(s.n_final) + " outside (-tau(n_{a-1}), 0]");
  }
  const auto ux = static_cast<std::uint64_t>(s.x);
  if (s.a_x > (ux + 1) / 2) fail("a(x) exceeds ceil(x/2)");
  if (s.a_x * s.max_tau < ux) fail("a(x) below x / max tau");
  for (const auto& r : s.dyadic) {
    if (r.j_plus > r.j_minus) fail("j_plus > j_minus at N=" + std::to_string(r.N));
    if (r.partial || r.skipped || !r.delta_exact) continue;
    const auto gap = r.energy > r.N ? r.energy - r.N : r.N - r.energy;
    if (gap > 2 * std::uint64_t{r.delta_N}) {
      fail("crossing energy " + std::to_string(r.energy) + " not within 2*delta_N of N=" +
           std::to_string(r.N));
    }
  }
  return failures;
}

}  // namespace orbitlab
