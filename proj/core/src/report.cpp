#include "toposeg/report.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <sstream>

#include "report_json.hpp"
#include "toposeg/error.hpp"

namespace toposeg {

using nlohmann::ordered_json;

namespace detail {

ordered_json metric_report_document(const MetricReport& report, const ReportContext& context) {
  ordered_json doc;
  doc["format"] = kMetricReportFormat;
  doc["format_version"] = kMetricReportVersion;
  doc["tool"] = kToolName;
  doc["tool_version"] = kToolVersion;
  doc["command"] = context.command;
  if (context.timestamp) doc["timestamp"] = *context.timestamp;

  ordered_json config = ordered_json::object();
  for (const auto& [key, value] : context.config) config[key] = value;
  doc["config"] = std::move(config);

  ordered_json images = ordered_json::array();
  for (const auto& m : report.images) {
    ordered_json entry;
    entry["id"] = m.id;
    for (const auto& field : kMetricFields) entry[std::string(field.name)] = m.*(field.member);
    entry["warnings"] = m.warnings;
    images.push_back(std::move(entry));
  }
  doc["images"] = std::move(images);

  ordered_json agg;
  agg["count"] = report.images.size();
  for (std::size_t f = 0; f < kMetricFields.size(); ++f) {
    agg[std::string(kMetricFields[f].name)] = {{"mean", report.aggregate[f].mean},
                                               {"std", report.aggregate[f].std}};
  }
  doc["aggregate"] = std::move(agg);
  return doc;
}

std::string dump_document(const ordered_json& doc) { return doc.dump(2) + "\n"; }

}  // namespace detail

std::string metric_report_json(const MetricReport& report, const ReportContext& context) {
  return detail::dump_document(detail::metric_report_document(report, context));
}

std::string metric_report_text(const MetricReport& report) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "images: " << report.images.size() << '\n';
  for (std::size_t f = 0; f < kMetricFields.size(); ++f) {
    os << kMetricFields[f].name << ".mean: " << report.aggregate[f].mean << '\n';
    os << kMetricFields[f].name << ".std: " << report.aggregate[f].std << '\n';
  }
  return os.str();
}

namespace {

[[noreturn]] void schema_error(const std::string& what) {
  throw FormatError("report schema: " + what);
}

const ordered_json& require(const ordered_json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) schema_error(where + " is missing '" + key + "'");
  return obj.at(key);
}

double require_unit(const ordered_json& obj, const char* key, const std::string& where) {
  const ordered_json& v = require(obj, key, where);
  if (!v.is_number()) schema_error(where + "." + key + " is not a number");
  const double d = v.get<double>();
  if (!std::isfinite(d) || d < 0.0 || d > 1.0) schema_error(where + "." + key + " outside [0, 1]");
  return d;
}

}  // namespace

MetricReport parse_metric_report(std::string_view json) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) schema_error("top level is not an object");
  if (require(doc, "format", "report") != kMetricReportFormat) schema_error("unexpected format tag");
  const auto& version = require(doc, "format_version", "report");
  if (!version.is_number_integer() || version.get<int>() != kMetricReportVersion) {
    schema_error("unsupported format_version");
  }
  for (const char* key : {"tool", "tool_version", "command"}) {
    if (!require(doc, key, "report").is_string()) schema_error(std::string(key) + " is not a string");
  }
  if (!require(doc, "config", "report").is_object()) schema_error("config is not an object");

  const auto& images = require(doc, "images", "report");
  if (!images.is_array()) schema_error("images is not an array");
  std::vector<ImageMetrics> parsed;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = "images[" + std::to_string(i) + "]";
    const auto& entry = images[i];
    ImageMetrics m;
    const auto& id = require(entry, "id", where);
    if (!id.is_string()) schema_error(where + ".id is not a string");
    m.id = id.get<std::string>();
    for (const auto& field : kMetricFields) {
      m.*(field.member) = require_unit(entry, std::string(field.name).c_str(), where);
    }
    const auto& warnings = require(entry, "warnings", where);
    if (!warnings.is_array()) schema_error(where + ".warnings is not an array");
    for (const auto& w : warnings) {
      if (!w.is_string()) schema_error(where + ".warnings holds a non-string");
      m.warnings.push_back(w.get<std::string>());
    }
    parsed.push_back(std::move(m));
  }
  if (parsed.empty()) schema_error("images is empty");

  const auto& agg = require(doc, "aggregate", "report");
  const auto& count = require(agg, "count", "aggregate");
  if (!count.is_number_unsigned() || count.get<std::size_t>() != parsed.size()) {
    schema_error("aggregate.count does not match the image list");
  }
  MetricReport report = aggregate(std::move(parsed));
  for (std::size_t f = 0; f < kMetricFields.size(); ++f) {
    const std::string name(kMetricFields[f].name);
    const auto& summary = require(agg, name.c_str(), "aggregate");
    const double mean = require_unit(summary, "mean", "aggregate." + name);
    const auto& sd = require(summary, "std", "aggregate." + name);
    if (!sd.is_number() || sd.get<double>() < 0.0) schema_error("aggregate." + name + ".std invalid");
    if (std::abs(mean - report.aggregate[f].mean) > 1e-9) {
      schema_error("aggregate." + name + ".mean disagrees with the image list");
    }
  }
  return report;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace toposeg
