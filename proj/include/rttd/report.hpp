#pragma once

#include <string>

#include <json.hpp>

#include "rttd/detector.hpp"
#include "rttd/harness.hpp"

namespace rttd::report {

using json = nlohmann::ordered_json;

// Non-finite numbers are written as the strings "inf", "-inf" and "nan".
json real_to_json(double v);
double real_from_json(const json& j);

json detection_to_json(const detect::DetectionReport& r);
/// Inverse of detection_to_json; throws ConfigError naming the bad field.
detect::DetectionReport detection_from_json(const json& j);

json scenario_to_json(const harness::ScenarioReport& r);
/// Columns: metric,group,bin_lo,bin_hi,count.
std::string histogram_csv(dist::Metric metric, const std::vector<harness::HistogramRow>& rows);

std::string matrix_table(const detect::DistanceMatrix& m, const std::vector<std::string>& labels);
/// One row per model: label, verdict, statistic, and truth when known.
std::string verdict_table(const detect::DetectionReport& r, const std::vector<std::string>& labels);
std::string scenario_summary(const harness::ScenarioReport& r);

}  // namespace rttd::report
