#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "orbitlab/orbit.hpp"

namespace orbitlab {

/// Bad command line or flag value. Maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Envelope written by a different format version.
class SchemaVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// I/O failure, message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- numbers ---------------------------------------------------------------

/// Integer literal in one of the forms 1000000, 1e6, 3e4, 2^26, 1.5e3. The
/// value must be integral and fit in int64. Throws UsageError.
std::int64_t parse_integer(const std::string& text);
/// parse_integer restricted to [lo, hi].
std::int64_t parse_integer(const std::string& text, std::int64_t lo, std::int64_t hi);
double parse_real(const std::string& text);

/// Comma list of integers. An element "..." between "a,b" and "c" expands the
/// geometric progression a, b, b*(b/a), ... up to and including c, which it
/// must hit exactly: "10,1e2,...,1e5" is 10,100,1000,10000,100000.
std::vector<std::int64_t> parse_integer_list(const std::string& text);
std::vector<double> parse_real_list(const std::string& text);

/// Ratio formatting for CSV: 17 significant digits, or `round` decimals with
/// ties to even.
std::string format_real(double value, std::optional<int> round = std::nullopt);

// ---- tables ----------------------------------------------------------------

/// A CSV table of preformatted cells.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  bool operator==(const Table&) const = default;
};

std::string to_csv(const Table& table);
/// Strict reader for what to_csv writes: no quoting, LF line ends, each row as
/// wide as the header. Throws IoError.
Table parse_csv(const std::string& text, const std::string& origin = "<memory>");

// ---- envelopes -------------------------------------------------------------

inline constexpr int kSchemaVersion = 1;

enum class Format { Csv, Json };
/// ".json" selects Json, everything else Csv.
Format format_for(const std::filesystem::path& path);

/// Result of one command. For Csv emission the payload must be a table
/// ({"columns": [...], "rows": [[...]]}); the metadata then goes to a sidecar
/// so the CSV itself stays a plain table.
struct ResultEnvelope {
  int schema_version = kSchemaVersion;
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  /// Null unless a timestamp was requested; outputs are otherwise
  /// byte-reproducible.
  std::optional<std::string> timestamp;
  std::string build_id;
  nlohmann::json payload;
  std::vector<std::string> notes;

  bool operator==(const ResultEnvelope&) const = default;
};

nlohmann::json to_json(const ResultEnvelope& envelope);
/// Throws SchemaVersionError when schema_version differs from kSchemaVersion.
ResultEnvelope envelope_from_json(const nlohmann::json& j);

nlohmann::json table_payload(const Table& table);
Table payload_table(const nlohmann::json& payload);

/// Sidecar for a CSV: "dir/table1.csv" -> "dir/table1.envelope.json".
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

/// Writes atomically (temp file + rename). Csv writes `path` and its sidecar.
void emit(const ResultEnvelope& envelope, const std::filesystem::path& path, Format format);
void emit(const ResultEnvelope& envelope, const std::filesystem::path& path);
/// Serialized text for stdout: the JSON document, or the bare CSV table.
std::string render(const ResultEnvelope& envelope, Format format);
/// Reads a JSON envelope, or a CSV plus its sidecar.
ResultEnvelope load(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// ---- module payloads -------------------------------------------------------

/// Mirrors OrbitSummary field for field; 64-bit integers as decimal strings.
nlohmann::json to_json(const OrbitSummary& summary, bool with_dyadic = true);
OrbitSummary summary_from_json(const nlohmann::json& j);

/// Compile-time build id (git describe), "unknown" outside a checkout.
std::string build_id();
/// UTC time as 2026-01-31T12:00:00Z.
std::string utc_timestamp();

}  // namespace orbitlab
