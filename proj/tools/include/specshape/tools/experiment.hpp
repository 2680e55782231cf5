#pragma once

// Experiment configs, scenario dispatch and report emission for the
// specshape command-line tool.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace specshape::tools {

inline constexpr int kSchemaVersion = 1;

/// Validation failure; path() names the offending field, e.g. "params.steps".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
    [[nodiscard]] const std::string& path() const { return path_; }

private:
    std::string path_;
};

struct ExperimentConfig {
    std::string scenario;
    std::vector<std::uint64_t> seeds;
    nlohmann::json params = nlohmann::json::object();  // defaults merged in
    std::filesystem::path out;
};

/// The recognized scenario names in documentation order.
const std::vector<std::string>& scenario_names();

/// Parses {"scenario", "seeds", "params"}; unknown fields, wrong types and
/// unknown scenarios raise ConfigError. Missing params take their defaults.
ExperimentConfig parse_config(const nlohmann::json& j);

/// Default parameter object of a scenario.
nlohmann::json default_params(const std::string& scenario);

struct SeedRun {
    std::string scenario;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
    std::map<std::string, double> metrics;  // NaN marks an undefined value
    std::map<std::string, bool> flags;
    nlohmann::json details = nlohmann::json::object();

    [[nodiscard]] bool passed() const;
    bool operator==(const SeedRun& other) const;
};

struct ReportBundle {
    int schema_version = kSchemaVersion;
    std::string scenario;
    std::string config_hash;
    nlohmann::json config;
    std::vector<std::string> metric_columns;  // CSV order
    std::vector<std::string> flag_columns;
    std::vector<SeedRun> runs;

    [[nodiscard]] bool passed() const;
    bool operator==(const ReportBundle& other) const;
};

/// 64-bit FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// Runs every seed, at most `threads` at a time (0 means
/// SPECSHAPE_THREADS or the hardware concurrency). Per-seed failures are
/// recorded and do not stop the run.
ReportBundle run_config(const ExperimentConfig& cfg, unsigned threads = 0);

/// Single seed of a single scenario with merged params.
SeedRun run_scenario(const std::string& scenario, const nlohmann::json& params, std::uint64_t seed);

nlohmann::json to_json(const ReportBundle& bundle);
ReportBundle bundle_from_json(const nlohmann::json& j);

/// Columns: scenario, seed, metric columns, flag columns (0/1), status.
/// Floats use 12 significant digits.
std::string to_csv(const ReportBundle& bundle);

/// Writes report.json and report.csv into `dir` (created if missing).
/// Throws std::runtime_error on I/O failure.
void emit_report(const ReportBundle& bundle, const std::filesystem::path& dir);

/// Thread cap from SPECSHAPE_THREADS; `fallback` when unset or invalid.
unsigned thread_cap(unsigned fallback);

}  // namespace specshape::tools
