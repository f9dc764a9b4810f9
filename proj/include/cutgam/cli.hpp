#pragma once

// Batch front-end shared by the `cutgam` executable and the tests.
//
// Every command writes into the output directory:
//   report.json   run metadata, resolved configuration, log, results
//   summary.txt   human-readable rendering of report.json
// plus command-specific tables (curves.csv, cuts.csv, grid.csv,
// replicates.csv). Numbers are written in shortest round-trip form and no
// timestamps are recorded, so equal inputs give byte-identical files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace cutgam::cli {

struct TargetSpec {
    std::string column;
    std::optional<std::size_t> k_max;
};

struct RunConfig {
    std::string command;  // fit | categorize | select | simulate | report
    std::optional<std::filesystem::path> input;
    std::string response = "y";
    std::string family = "gaussian";
    std::optional<std::string> offset;
    std::vector<TargetSpec> targets;
    std::vector<std::string> smooth;
    std::vector<std::string> linear;
    std::vector<std::string> categorical;
    std::optional<std::size_t> k;
    std::size_t k_max = 4;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    std::filesystem::path out = "cutgam_out";
    std::string scenario = "S1";
    std::size_t n = 1000;
    std::size_t replicates = 100;
    std::string k_mode = "selected";
    unsigned threads = 1;
    char delimiter = ',';
    int knots = 20;
    int degree = 3;
    int penalty_order = 2;
    std::optional<std::filesystem::path> export_data;

    /// Throws Error(InvalidArgument) for out-of-range values.
    void validate() const;
};

nlohmann::json to_json(const RunConfig& config);

/// Overlays the keys present in `doc` onto `config`. Keys mirror the flag
/// names with dashes replaced by underscores ("k_max", "penalty_order").
void apply_json(RunConfig& config, const nlohmann::json& doc);

/// Parses `cutgam <command> [flags]`. A `--config <file>` document is
/// applied first and explicit flags override it. Throws Error(InvalidArgument)
/// on usage errors; `help` receives the usage text when --help is given.
RunConfig parse_command_line(const std::vector<std::string>& args, std::string* help = nullptr);

struct RunOutcome {
    int exit_code = 0;
    nlohmann::json report;
    std::string summary;
};

/// Executes the command and writes the report files. Library errors are
/// converted into exit code 1 with {"error": {"code", "message"}} as the
/// report (also written to error.json when the output directory is usable).
RunOutcome run(const RunConfig& config);

std::string render_summary(const nlohmann::json& report);

/// Verbosity from CUTGAM_VERBOSITY (0 quiet, 1 progress, 2 debug); default 1.
int verbosity();

}  // namespace cutgam::cli
