#include "orbitlab/io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>

#include "orbitlab/scale_analytics.hpp"

#ifndef ORBITLAB_BUILD_ID
#define ORBITLAB_BUILD_ID "unknown"
#endif

namespace orbitlab {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

[[noreturn]] void bad_number(const std::string& text, const std::string& why) {
  throw UsageError("invalid number '" + text + "': " + why);
}

using i128 = __int128;
constexpr i128 kMax = std::numeric_limits<std::int64_t>::max();

i128 checked(i128 v, const std::string& text) {
  if (v > kMax || v < -kMax) bad_number(text, "out of range");
  return v;
}

std::int64_t plain_integer(const std::string& text, const std::string& whole) {
  std::int64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec == std::errc::result_out_of_range) bad_number(whole, "out of range");
  if (ec != std::errc() || p != end || text.empty()) bad_number(whole, "not an integer");
  return v;
}

// Decimal mantissa with optional exponent, evaluated exactly.
std::int64_t scientific(const std::string& text) {
  std::string s = text;
  bool negative = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    negative = s[0] == '-';
    s.erase(0, 1);
  }
  const auto epos = s.find_first_of("eE");
  std::string mantissa = s.substr(0, epos);
  int exponent = 0;
  if (epos != std::string::npos) {
    const auto e = plain_integer(s.substr(epos + 1), text);
    if (e > 30 || e < -30) bad_number(text, "exponent out of range");
    exponent = static_cast<int>(e);
  }
  const auto dot = mantissa.find('.');
  if (dot != std::string::npos) {
    exponent -= static_cast<int>(mantissa.size() - dot - 1);
    mantissa.erase(dot, 1);
  }
  if (mantissa.empty() || mantissa.find_first_not_of("0123456789") != std::string::npos) {
    bad_number(text, "not an integer");
  }
  while (exponent < 0) {
    if (mantissa.back() != '0') bad_number(text, "not an integer");
    mantissa.pop_back();
    ++exponent;
    if (mantissa.empty()) mantissa = "0";
  }
  i128 v = plain_integer(mantissa, text);
  for (int i = 0; i < exponent; ++i) v = checked(v * 10, text);
  return static_cast<std::int64_t>(negative ? -v : v);
}

}  // namespace

std::int64_t parse_integer(const std::string& raw) {
  const std::string text = trim(raw);
  if (text.empty()) bad_number(raw, "empty");
  if (const auto caret = text.find('^'); caret != std::string::npos) {
    const auto base = plain_integer(text.substr(0, caret), text);
    const auto exp = plain_integer(text.substr(caret + 1), text);
    if (exp < 0) bad_number(text, "negative exponent");
    i128 v = 1;
    for (std::int64_t i = 0; i < exp; ++i) {
      v = checked(v * base, text);
      if (v == 0 || v == 1) break;
    }
    return static_cast<std::int64_t>(v);
  }
  if (text.find_first_of(".eE") != std::string::npos) return scientific(text);
  return plain_integer(text, text);
}

std::int64_t parse_integer(const std::string& text, std::int64_t lo, std::int64_t hi) {
  const auto v = parse_integer(text);
  if (v < lo || v > hi) {
    throw UsageError("value " + trim(text) + " outside [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + "]");
  }
  return v;
}

double parse_real(const std::string& raw) {
  const std::string text = trim(raw);
  double v = 0;
  const auto* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end || text.empty() || !std::isfinite(v)) {
    throw UsageError("invalid number '" + raw + "'");
  }
  return v;
}

std::vector<std::int64_t> parse_integer_list(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.empty()) throw UsageError("empty list");
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (trim(parts[i]) != "...") {
      out.push_back(parse_integer(parts[i]));
      continue;
    }
    if (out.size() < 2 || i + 1 >= parts.size() || trim(parts[i + 1]) == "...") {
      throw UsageError("'...' needs two terms before it and one after in '" + text + "'");
    }
    const auto a = out[out.size() - 2], b = out.back();
    const auto end = parse_integer(parts[++i]);
    if (a <= 0 || b <= a || b % a != 0) {
      throw UsageError("'...' needs a positive integer ratio in '" + text + "'");
    }
    const auto ratio = b / a;
    i128 v = b;
    while (v < end) {
      v *= ratio;
      if (v > end) break;
      out.push_back(static_cast<std::int64_t>(v));
    }
    if (out.back() != end) {
      throw UsageError("geometric progression in '" + text + "' does not reach " +
                       std::to_string(end));
    }
  }
  return out;
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& p : split(text, ',')) out.push_back(parse_real(p));
  if (out.empty()) throw UsageError("empty list");
  return out;
}

std::string format_real(double value, std::optional<int> round) {
  char buf[64];
  if (round) {
    const double r = round_half_even(value, *round);
    std::snprintf(buf, sizeof buf, "%.*f", *round, r == 0.0 ? 0.0 : r);
  } else {
    std::snprintf(buf, sizeof buf, "%.17g", value);
  }
  return buf;
}

void Table::add(std::vector<std::string> row) {
  if (row.size() != columns.size()) {
    throw std::logic_error("Table::add: row width " + std::to_string(row.size()) +
                           " != " + std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

std::string to_csv(const Table& table) {
  auto line = [](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\n\"") != std::string::npos) {
        throw std::logic_error("to_csv: cell needs quoting: " + cells[i]);
      }
      if (i) s += ',';
      s += cells[i];
    }
    return s + '\n';
  };
  std::string out = line(table.columns);
  for (const auto& r : table.rows) out += line(r);
  return out;
}

Table parse_csv(const std::string& text, const std::string& origin) {
  Table t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto cells = split(line, ',');
    if (lineno == 1) {
      t.columns = std::move(cells);
      continue;
    }
    if (cells.size() != t.columns.size()) {
      throw IoError(origin + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(t.columns.size()) + " cells, got " +
                    std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (lineno == 0) throw IoError(origin + ": empty CSV");
  return t;
}

Format format_for(const std::filesystem::path& path) {
  return path.extension() == ".json" ? Format::Json : Format::Csv;
}

json to_json(const ResultEnvelope& e) {
  return json{{"schema_version", e.schema_version},
              {"command", e.command},
              {"config", e.config},
              {"timestamp", e.timestamp ? json(*e.timestamp) : json(nullptr)},
              {"build_id", e.build_id},
              {"payload", e.payload},
              {"notes", e.notes}};
}

ResultEnvelope envelope_from_json(const json& j) {
  if (!j.is_object() || !j.contains("schema_version")) {
    throw SchemaVersionError("envelope has no schema_version");
  }
  const int version = j.at("schema_version").get<int>();
  if (version != kSchemaVersion) {
    throw SchemaVersionError("envelope schema_version " + std::to_string(version) +
                             ", this build reads " + std::to_string(kSchemaVersion));
  }
  ResultEnvelope e;
  e.schema_version = version;
  e.command = j.at("command").get<std::string>();
  e.config = j.at("config");
  if (!j.at("timestamp").is_null()) e.timestamp = j.at("timestamp").get<std::string>();
  e.build_id = j.at("build_id").get<std::string>();
  e.payload = j.at("payload");
  e.notes = j.at("notes").get<std::vector<std::string>>();
  return e;
}

json table_payload(const Table& t) { return json{{"columns", t.columns}, {"rows", t.rows}}; }

Table payload_table(const json& payload) {
  if (!payload.is_object() || !payload.contains("columns") || !payload.contains("rows")) {
    throw std::invalid_argument("payload is not a table");
  }
  Table t;
  t.columns = payload.at("columns").get<std::vector<std::string>>();
  t.rows = payload.at("rows").get<std::vector<std::vector<std::string>>>();
  return t;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".envelope.json");
  return p;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

std::string render(const ResultEnvelope& envelope, Format format) {
  if (format == Format::Json) return to_json(envelope).dump(2) + '\n';
  return to_csv(payload_table(envelope.payload));
}

void emit(const ResultEnvelope& envelope, const std::filesystem::path& path, Format format) {
  if (format == Format::Json) {
    write_file_atomic(path, render(envelope, format));
    return;
  }
  const Table table = payload_table(envelope.payload);
  json meta = to_json(envelope);
  meta["payload"] = json{{"columns", table.columns}, {"csv", path.filename().string()}};
  write_file_atomic(path, to_csv(table));
  write_file_atomic(sidecar_path(path), meta.dump(2) + '\n');
}

void emit(const ResultEnvelope& envelope, const std::filesystem::path& path) {
  emit(envelope, path, format_for(path));
}

ResultEnvelope load(const std::filesystem::path& path) {
  if (format_for(path) == Format::Json) {
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ": " + e.what());
    }
    return envelope_from_json(j);
  }
  const auto side = sidecar_path(path);
  json meta;
  try {
    meta = json::parse(read_file(side));
  } catch (const json::exception& e) {
    throw IoError(side.string() + ": " + e.what());
  }
  auto e = envelope_from_json(meta);
  const Table table = parse_csv(read_file(path), path.string());
  if (table.columns != e.payload.at("columns").get<std::vector<std::string>>()) {
    throw IoError(path.string() + ": header does not match " + side.string());
  }
  e.payload = table_payload(table);
  return e;
}

namespace {

std::string dec(std::uint64_t v) { return std::to_string(v); }
std::string dec(std::int64_t v) { return std::to_string(v); }

std::uint64_t as_u64(const json& j, const char* key) {
  const auto s = j.at(key).get<std::string>();
  const auto v = parse_integer(s);
  if (v < 0) throw std::invalid_argument(std::string("negative ") + key);
  return static_cast<std::uint64_t>(v);
}

}  // namespace

json to_json(const OrbitSummary& s, bool with_dyadic) {
  json j{{"x", dec(s.x)},
         {"a_x", dec(s.a_x)},
         {"n_final", dec(s.n_final)},
         {"total_energy", dec(s.total_energy)},
         {"last_tau", s.last_tau},
         {"max_tau", s.max_tau}};
  if (!with_dyadic) return j;
  json dy = json::array();
  for (const auto& r : s.dyadic) {
    dy.push_back({{"N", dec(r.N)},
                  {"j_plus", dec(r.j_plus)},
                  {"j_minus", dec(r.j_minus)},
                  {"V", dec(r.V)},
                  {"energy", dec(r.energy)},
                  {"sum_tau_sq", dec(r.sum_tau_sq)},
                  {"delta_N", r.delta_N},
                  {"delta_exact", r.delta_exact},
                  {"partial", r.partial},
                  {"skipped", r.skipped}});
  }
  j["dyadic"] = std::move(dy);
  return j;
}

OrbitSummary summary_from_json(const json& j) {
  OrbitSummary s;
  s.x = parse_integer(j.at("x").get<std::string>());
  s.a_x = as_u64(j, "a_x");
  s.n_final = parse_integer(j.at("n_final").get<std::string>());
  s.total_energy = as_u64(j, "total_energy");
  s.last_tau = j.at("last_tau").get<std::uint32_t>();
  s.max_tau = j.at("max_tau").get<std::uint32_t>();
  if (j.contains("dyadic")) {
    for (const auto& d : j.at("dyadic")) {
      DyadicRecord r;
      r.N = as_u64(d, "N");
      r.j_plus = as_u64(d, "j_plus");
      r.j_minus = as_u64(d, "j_minus");
      r.V = as_u64(d, "V");
      r.energy = as_u64(d, "energy");
      r.sum_tau_sq = as_u64(d, "sum_tau_sq");
      r.delta_N = d.at("delta_N").get<std::uint32_t>();
      r.delta_exact = d.at("delta_exact").get<bool>();
      r.partial = d.at("partial").get<bool>();
      r.skipped = d.at("skipped").get<bool>();
      s.dyadic.push_back(r);
    }
  }
  return s;
}

std::string build_id() { return ORBITLAB_BUILD_ID; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

}  // namespace orbitlab
