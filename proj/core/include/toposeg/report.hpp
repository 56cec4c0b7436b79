#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "toposeg/metrics.hpp"

namespace toposeg {

inline constexpr std::string_view kToolName = "toposeg";
inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kMetricReportFormat = "toposeg.metric_report";
inline constexpr int kMetricReportVersion = 1;

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct ReportContext {
  std::string command;
  ConfigEcho config;
  /// Omitted from the file when empty (deterministic mode).
  std::optional<std::string> timestamp;
};

/// Machine-readable report:
///
///   {
///     "format": "toposeg.metric_report", "format_version": 1,
///     "tool": "toposeg", "tool_version": "...", "command": "...",
///     "timestamp": "..." (optional),
///     "config": {"key": "value", ...},
///     "images": [{"id": ..., "dice": ..., ..., "ece": ..., "warnings": [...]}],
///     "aggregate": {"count": N, "dice": {"mean": ..., "std": ...}, ...}
///   }
///
/// Metric keys follow kMetricFields. Output ends with a newline.
std::string metric_report_json(const MetricReport& report, const ReportContext& context);

/// One `key: value` line per aggregate metric, e.g. `dice.mean: 0.912345`.
std::string metric_report_text(const MetricReport& report);

/// Parses and schema-checks a report produced by metric_report_json. Extra
/// top-level keys are allowed. Throws FormatError naming the first problem.
MetricReport parse_metric_report(std::string_view json);

/// Current UTC time as ISO-8601.
std::string utc_timestamp();

}  // namespace toposeg
