#pragma once

#include <string>

#include "chartvec/chart_fact.hpp"
#include "json.hpp"

namespace chartvec::detail {

// `path` prefixes schema-error messages, e.g. "visualizations[2].charts[0].fact".
ChartFact fact_from_json(const nlohmann::json& j, const std::string& path);

nlohmann::ordered_json fact_to_json(const ChartFact& fact);

}  // namespace chartvec::detail
