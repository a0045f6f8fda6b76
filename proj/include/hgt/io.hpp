#pragma once

// File formats: scenario files, posterior checkpoints, per-replication run
// logs (JSON), per-batch metrics (CSV) and the cross-replication summary.
//
// Agent and type indices are 1-based in every file and 0-based in memory.
// Doubles are written in shortest round-trip form, so every file parses back
// to bit-identical values. Infinite standard errors are written as null.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hgt/bandit.hpp"

namespace hgt::io {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr int kHistogramBins = 100;  // width 0.01 over [0, 1]

/// A file does not conform to its schema (missing or unknown keys, wrong types).
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A file or directory could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stored data is inconsistent with itself (e.g. summary vs. logs).
class CorruptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScenarioFile {
  ScenarioConfig config;
  std::optional<std::string> output_dir;
  int verbosity = 0;
};

/// Parses and validates a scenario document. Throws SchemaError on structural
/// problems; dimension and constraint checks propagate ValidationError or
/// InfeasibleError from ScenarioConfig::validate.
ScenarioFile parse_scenario(const Json& doc);
ScenarioFile load_scenario(const std::filesystem::path& path);
Json scenario_to_json(const ScenarioFile& scenario);

Json posterior_to_json(const PosteriorState& state);
PosteriorState posterior_from_json(const Json& doc);

Json match_to_json(const MatchResult& match);

Json run_to_json(const RunResult& run, const std::string& scenario_name);
RunResult run_from_json(const Json& doc);

/// "replication_0007.json"
std::string log_file_name(int replication);

/// Per-batch metrics for every successful replication, ordered by
/// (replication, batch).
std::string metrics_csv(const std::vector<RunResult>& runs);

/// Cross-replication summary. `runs` must be ordered by replication index.
/// `expected_replications` is the count the scenario asked for.
Json summarize(const std::vector<RunResult>& runs, const ScenarioConfig& config,
               int expected_replications);

/// Human-readable per-batch table of a summary document.
std::string format_summary(const Json& summary);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

/// Writes to a sibling temporary file, then renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

}  // namespace hgt::io
