#pragma once

#include "fuda/config.hpp"
#include "fuda/experiment.hpp"

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fuda {

/// `<variant>_<seed>_<UTC yyyymmddThhmmssZ>`.
std::string make_run_id(const std::string& variant, std::uint64_t seed,
                        std::chrono::system_clock::time_point when);

/// One metrics.jsonl line (no trailing newline). Empty buckets and a missing
/// matching diagnostic are written as null.
std::string metrics_json_line(const EpochMetrics& m);

struct RunResult {
  std::string run_dir;
  std::vector<EpochMetrics> metrics;
};

/// Trains config.variant with config.seeds.front(). Writes config.resolved
/// before training, then appends and flushes one metrics line per epoch.
RunResult execute_run(RunConfig config);

/// Runs every variant x seed into its own directory and returns the table.
AblationTable execute_ablation(const RunConfig& config, const std::vector<std::string>& variants,
                               const std::vector<std::uint64_t>& seeds,
                               std::vector<RunResult>* runs = nullptr);

enum class ReportFormat { text, md, csv };
ReportFormat parse_report_format(const std::string& name);
std::string format_table(const AblationTable& table, ReportFormat format);

struct ReportResult {
  AblationTable table;
  std::vector<std::string> plots;
  std::vector<std::string> warnings;
};

/// Reads run directories (never writes to them), groups runs by variant, and
/// writes the table plus SVG curves to `out_dir`. Runs lacking metrics are
/// skipped with a warning.
ReportResult build_report(const std::vector<std::string>& run_dirs, ReportFormat format,
                          const std::string& out_dir);

}  // namespace fuda
