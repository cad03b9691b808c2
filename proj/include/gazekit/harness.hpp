#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gazekit/error.hpp"
#include "gazekit/pipeline.hpp"

namespace gazekit {

struct RunConfig {
    std::vector<std::filesystem::path> recordings;
    std::vector<DetectorKind> detectors;
    std::vector<GazerKind> gazers;
    PipelineOptions options;
    std::filesystem::path output_dir;
    int workers = 1;

    /// Throws Error(ConfigError) when a list is empty or workers < 1.
    void validate() const;
};

/// Reads a JSON run configuration. Relative recording paths resolve against
/// the config file's directory. Throws Error(ConfigError).
RunConfig load_run_config(const std::filesystem::path& file);

struct CellError {
    std::string recording;
    std::string detector;
    std::string gazer;
    ErrorKind kind = ErrorKind::BadRecord;
    std::string message;
};

struct RunSummary {
    int cells_ok = 0;
    std::vector<CellError> errors;
};

/// Ingests every recording (ingestion errors propagate), then evaluates each
/// recording x detector x gazer cell. Recordings are spread over `workers`
/// threads; a failing cell is logged in errors.csv and the rest continue.
/// Writes cells/<recording>__<detector>__<gazer>/ and errors.csv, then the report.
RunSummary run_matrix(const RunConfig& cfg);

/// Rebuilds per_group.csv, summary.csv, summary_by_eccentricity.csv,
/// threshold_sweep.csv and plots/*.svg from the cells of a result directory.
/// Throws Error(BadRecord) when there is no completed cell.
void emit_report(const std::filesystem::path& results_dir);

/// Writes threshold_sweep.csv and plots/retention.svg only.
void emit_sweep(const std::filesystem::path& results_dir, double max_deg = 50.0, double step_deg = 1.0);

/// printf %.6g.
std::string format_sig6(double v);

} // namespace gazekit
