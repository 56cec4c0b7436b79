#pragma once

#include "json.hpp"
#include "toposeg/report.hpp"

namespace toposeg::detail {

nlohmann::ordered_json metric_report_document(const MetricReport& report, const ReportContext& context);
std::string dump_document(const nlohmann::ordered_json& doc);

}  // namespace toposeg::detail
