#include "chartvec/chart_fact.hpp"

#include <algorithm>
#include <initializer_list>

#include "chartvec/error.hpp"
#include "fact_json.hpp"

namespace chartvec {

namespace {

constexpr std::array<std::string_view, kFieldTypeCount> kFieldTypeNames = {
    "temporal", "numerical", "categorical", "geographical"};

constexpr std::array<std::string_view, kChartTypeCount> kChartTypeNames = {
    "vertical bar chart", "horizontal bar chart", "grouped bar chart",
    "stacked bar chart",  "line chart",           "area chart",
    "pie chart",          "donut chart",          "scatter plot",
    "bubble chart",       "treemap",              "map",
    "radial bar chart",   "progress chart",       "table"};

constexpr std::array<std::string_view, kFactTypeCount> kFactTypeNames = {
    "trend",   "categorization", "difference",   "rank",    "extreme",
    "association", "proportion", "distribution", "outlier", "value"};

constexpr std::array<std::string_view, kAggregationCount> kAggregationNames = {
    "count", "sum", "average", "minimum", "maximum"};

constexpr std::array<std::string_view, 3> kDirectionNames = {"increasing", "decreasing",
                                                             "no trend"};
constexpr std::array<std::string_view, 2> kRelationNames = {"lower", "higher"};
constexpr std::array<std::string_view, 2> kExtremeNames = {"max", "min"};
constexpr std::array<std::string_view, 2> kSignNames = {"positive", "negative"};

template <typename Enum, std::size_t N>
Enum lookup_enum(const std::array<std::string_view, N>& names, std::string_view name,
                 std::string_view what) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw Error(ErrorCode::parse,
                "unknown " + std::string(what) + " \"" + std::string(name) + "\"");
  }
  return static_cast<Enum>(it - names.begin());
}

}  // namespace

std::string_view to_string(FieldType v) { return kFieldTypeNames.at(static_cast<std::size_t>(v)); }
std::string_view to_string(ChartType v) { return kChartTypeNames.at(static_cast<std::size_t>(v)); }
std::string_view to_string(FactType v) { return kFactTypeNames.at(static_cast<std::size_t>(v)); }
std::string_view to_string(Aggregation v) {
  return kAggregationNames.at(static_cast<std::size_t>(v));
}
std::string_view to_string(meta::Direction v) {
  return kDirectionNames.at(static_cast<std::size_t>(v));
}
std::string_view to_string(meta::Relation v) {
  return kRelationNames.at(static_cast<std::size_t>(v));
}
std::string_view to_string(meta::ExtremeKind v) {
  return kExtremeNames.at(static_cast<std::size_t>(v));
}
std::string_view to_string(meta::Sign v) { return kSignNames.at(static_cast<std::size_t>(v)); }

FieldType parse_field_type(std::string_view name) {
  return lookup_enum<FieldType>(kFieldTypeNames, name, "field type");
}
ChartType parse_chart_type(std::string_view name) {
  return lookup_enum<ChartType>(kChartTypeNames, name, "chart type");
}
FactType parse_fact_type(std::string_view name) {
  return lookup_enum<FactType>(kFactTypeNames, name, "fact type");
}
Aggregation parse_aggregation(std::string_view name) {
  return lookup_enum<Aggregation>(kAggregationNames, name, "aggregation");
}

std::string_view meta_kind_name(const MetaInfo& m) {
  static constexpr std::array<std::string_view, 7> names = {
      "none", "trend", "categorization", "difference", "rank", "extreme", "association"};
  return names.at(m.index());
}

std::vector<std::string> meta_text(const MetaInfo& m) {
  struct Visitor {
    std::vector<std::string> operator()(const meta::None&) const { return {}; }
    std::vector<std::string> operator()(const meta::Trend& t) const {
      return {std::string(to_string(t.direction))};
    }
    std::vector<std::string> operator()(const meta::Categorization& c) const {
      return {std::to_string(c.count) + " categories"};
    }
    std::vector<std::string> operator()(const meta::Difference& d) const {
      return {std::string(to_string(d.relation))};
    }
    std::vector<std::string> operator()(const meta::Rank& r) const { return r.top3; }
    std::vector<std::string> operator()(const meta::Extreme& e) const {
      return {std::string(to_string(e.kind))};
    }
    std::vector<std::string> operator()(const meta::Association& a) const {
      return {std::string(to_string(a.sign))};
    }
  };
  return std::visit(Visitor{}, m);
}

bool meta_compatible(FactType type, const MetaInfo& m) {
  if (std::holds_alternative<meta::None>(m)) return true;
  switch (type) {
    case FactType::trend:
      return std::holds_alternative<meta::Trend>(m);
    case FactType::categorization:
      return std::holds_alternative<meta::Categorization>(m);
    case FactType::difference:
      return std::holds_alternative<meta::Difference>(m);
    case FactType::rank:
      return std::holds_alternative<meta::Rank>(m);
    case FactType::extreme:
      return std::holds_alternative<meta::Extreme>(m);
    case FactType::association:
      return std::holds_alternative<meta::Association>(m);
    default:
      return false;
  }
}

ValidationReport validate_fact(const ChartFact& fact) {
  ValidationReport report;
  auto fail = [&](std::string field, std::string rule) {
    report.violations.push_back({std::move(field), std::move(rule)});
  };

  if (fact.subspace.size() > kMaxFilters) {
    fail("subspace", "at most 3 filters are allowed");
  }
  for (std::size_t i = 0; i < fact.subspace.size(); ++i) {
    const auto& f = fact.subspace[i];
    const std::string at = "subspace[" + std::to_string(i) + "]";
    if (f.field.empty()) fail(at + ".field", "filter field must be non-empty");
    if (f.value.empty()) fail(at + ".value", "filter value must be non-empty");
  }
  if (fact.breakdown) {
    if (fact.breakdown->name.empty()) fail("breakdown.field", "breakdown field must be non-empty");
    if (fact.breakdown->field_type != FieldType::temporal &&
        fact.breakdown->field_type != FieldType::categorical) {
      fail("breakdown.field_type", "breakdown must be temporal or categorical");
    }
  }
  if (fact.measure && fact.measure->aggregation != Aggregation::count &&
      fact.measure->field.empty()) {
    fail("measure.field", "measure field is required unless aggregation is count");
  }
  if (fact.focus) {
    if (fact.focus->field.name.empty()) fail("focus.field", "focus field must be non-empty");
    if (fact.focus->value.empty()) fail("focus.value", "focus value must be non-empty");
  }
  if (!meta_compatible(fact.type_f, fact.meta)) {
    fail("meta", "meta incompatible with fact type");
  }
  if (const auto* c = std::get_if<meta::Categorization>(&fact.meta); c && c->count <= 0) {
    fail("meta.count", "category count must be positive");
  }
  if (const auto* r = std::get_if<meta::Rank>(&fact.meta)) {
    if (r->top3.size() > 3) fail("meta.top3", "rank meta holds at most 3 entries");
    for (const auto& s : r->top3) {
      if (s.empty()) fail("meta.top3", "rank entries must be non-empty");
    }
  }
  return report;
}

namespace detail {

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::parse, path + ": " + what);
}

const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) schema_error(path, "expected an object");
  return j;
}

void reject_unknown_keys(const json& j, const std::string& path,
                         std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      schema_error(path, "unknown key \"" + key + "\"");
    }
  }
}

const json& require_key(const json& j, const std::string& path, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) schema_error(path, std::string("missing required key \"") + key + "\"");
  return *it;
}

const json& optional_key(const json& j, const char* key) {
  static const json null_value;
  const auto it = j.find(key);
  return it == j.end() ? null_value : *it;
}

std::string require_string(const json& j, const std::string& path, const char* key) {
  const json& v = require_key(j, path, key);
  if (!v.is_string()) schema_error(path + "." + key, "expected a string");
  return v.get<std::string>();
}

template <typename Fn>
auto parse_enum_at(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    schema_error(path, e.what());
  }
}

MetaInfo meta_from_json(const json& j, const std::string& path) {
  if (j.is_null()) return meta::None{};
  require_object(j, path);
  const std::string kind = require_string(j, path, "kind");
  if (kind == "none") {
    reject_unknown_keys(j, path, {"kind"});
    return meta::None{};
  }
  if (kind == "trend") {
    reject_unknown_keys(j, path, {"kind", "direction"});
    const auto s = require_string(j, path, "direction");
    return meta::Trend{parse_enum_at(path + ".direction", [&] {
      return lookup_enum<meta::Direction>(kDirectionNames, s, "trend direction");
    })};
  }
  if (kind == "categorization") {
    reject_unknown_keys(j, path, {"kind", "count"});
    const json& c = require_key(j, path, "count");
    if (!c.is_number_integer()) schema_error(path + ".count", "expected an integer");
    return meta::Categorization{c.get<std::int64_t>()};
  }
  if (kind == "difference") {
    reject_unknown_keys(j, path, {"kind", "relation"});
    const auto s = require_string(j, path, "relation");
    return meta::Difference{parse_enum_at(path + ".relation", [&] {
      return lookup_enum<meta::Relation>(kRelationNames, s, "difference relation");
    })};
  }
  if (kind == "rank") {
    reject_unknown_keys(j, path, {"kind", "top3"});
    const json& arr = require_key(j, path, "top3");
    if (!arr.is_array()) schema_error(path + ".top3", "expected an array");
    meta::Rank r;
    for (const auto& item : arr) {
      if (!item.is_string()) schema_error(path + ".top3", "expected strings");
      r.top3.push_back(item.get<std::string>());
    }
    return r;
  }
  if (kind == "extreme") {
    reject_unknown_keys(j, path, {"kind", "extreme"});
    const auto s = require_string(j, path, "extreme");
    return meta::Extreme{parse_enum_at(path + ".extreme", [&] {
      return lookup_enum<meta::ExtremeKind>(kExtremeNames, s, "extreme kind");
    })};
  }
  if (kind == "association") {
    reject_unknown_keys(j, path, {"kind", "sign"});
    const auto s = require_string(j, path, "sign");
    return meta::Association{parse_enum_at(path + ".sign", [&] {
      return lookup_enum<meta::Sign>(kSignNames, s, "association sign");
    })};
  }
  schema_error(path + ".kind", "unknown meta kind \"" + kind + "\"");
}

nlohmann::ordered_json meta_to_json(const MetaInfo& m) {
  using nlohmann::ordered_json;
  struct Visitor {
    ordered_json operator()(const meta::None&) const { return nullptr; }
    ordered_json operator()(const meta::Trend& t) const {
      return {{"kind", "trend"}, {"direction", to_string(t.direction)}};
    }
    ordered_json operator()(const meta::Categorization& c) const {
      return {{"kind", "categorization"}, {"count", c.count}};
    }
    ordered_json operator()(const meta::Difference& d) const {
      return {{"kind", "difference"}, {"relation", to_string(d.relation)}};
    }
    ordered_json operator()(const meta::Rank& r) const {
      return {{"kind", "rank"}, {"top3", r.top3}};
    }
    ordered_json operator()(const meta::Extreme& e) const {
      return {{"kind", "extreme"}, {"extreme", to_string(e.kind)}};
    }
    ordered_json operator()(const meta::Association& a) const {
      return {{"kind", "association"}, {"sign", to_string(a.sign)}};
    }
  };
  return std::visit(Visitor{}, m);
}

}  // namespace

ChartFact fact_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown_keys(j, path,
                      {"type_c", "type_f", "subspace", "breakdown", "measure", "focus", "meta"});
  ChartFact fact;
  const auto type_c = require_string(j, path, "type_c");
  fact.type_c = parse_enum_at(path + ".type_c", [&] { return parse_chart_type(type_c); });
  const auto type_f = require_string(j, path, "type_f");
  fact.type_f = parse_enum_at(path + ".type_f", [&] { return parse_fact_type(type_f); });

  const json& subspace = require_key(j, path, "subspace");
  if (!subspace.is_array()) schema_error(path + ".subspace", "expected an array");
  for (std::size_t i = 0; i < subspace.size(); ++i) {
    const std::string at = path + ".subspace[" + std::to_string(i) + "]";
    const json& f = require_object(subspace[i], at);
    reject_unknown_keys(f, at, {"field", "value", "field_type"});
    Filter filter;
    filter.field = require_string(f, at, "field");
    filter.value = require_string(f, at, "value");
    const auto ft = require_string(f, at, "field_type");
    filter.field_type = parse_enum_at(at + ".field_type", [&] { return parse_field_type(ft); });
    fact.subspace.push_back(std::move(filter));
  }

  if (const json& b = optional_key(j, "breakdown"); !b.is_null()) {
    const std::string at = path + ".breakdown";
    require_object(b, at);
    reject_unknown_keys(b, at, {"field", "field_type"});
    FieldRef ref;
    ref.name = require_string(b, at, "field");
    const auto ft = require_string(b, at, "field_type");
    ref.field_type = parse_enum_at(at + ".field_type", [&] { return parse_field_type(ft); });
    fact.breakdown = std::move(ref);
  }

  if (const json& m = optional_key(j, "measure"); !m.is_null()) {
    const std::string at = path + ".measure";
    require_object(m, at);
    reject_unknown_keys(m, at, {"field", "aggregation"});
    MeasureSpec spec;
    spec.field = require_string(m, at, "field");
    const auto agg = require_string(m, at, "aggregation");
    spec.aggregation = parse_enum_at(at + ".aggregation", [&] { return parse_aggregation(agg); });
    fact.measure = std::move(spec);
  }

  if (const json& f = optional_key(j, "focus"); !f.is_null()) {
    const std::string at = path + ".focus";
    require_object(f, at);
    reject_unknown_keys(f, at, {"field", "field_type", "value"});
    Focus focus;
    focus.field.name = require_string(f, at, "field");
    const auto ft = require_string(f, at, "field_type");
    focus.field.field_type =
        parse_enum_at(at + ".field_type", [&] { return parse_field_type(ft); });
    focus.value = require_string(f, at, "value");
    fact.focus = std::move(focus);
  }

  fact.meta = meta_from_json(optional_key(j, "meta"), path + ".meta");
  return fact;
}

nlohmann::ordered_json fact_to_json(const ChartFact& fact) {
  nlohmann::ordered_json j;
  j["type_c"] = to_string(fact.type_c);
  j["type_f"] = to_string(fact.type_f);
  j["subspace"] = nlohmann::ordered_json::array();
  for (const auto& f : fact.subspace) {
    j["subspace"].push_back(
        {{"field", f.field}, {"value", f.value}, {"field_type", to_string(f.field_type)}});
  }
  if (fact.breakdown) {
    j["breakdown"] = {{"field", fact.breakdown->name},
                      {"field_type", to_string(fact.breakdown->field_type)}};
  } else {
    j["breakdown"] = nullptr;
  }
  if (fact.measure) {
    j["measure"] = {{"field", fact.measure->field},
                    {"aggregation", to_string(fact.measure->aggregation)}};
  } else {
    j["measure"] = nullptr;
  }
  if (fact.focus) {
    j["focus"] = {{"field", fact.focus->field.name},
                  {"field_type", to_string(fact.focus->field.field_type)},
                  {"value", fact.focus->value}};
  } else {
    j["focus"] = nullptr;
  }
  j["meta"] = meta_to_json(fact.meta);
  return j;
}

}  // namespace detail

ChartFact parse_fact_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse,
                "syntax error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return detail::fact_from_json(j, "fact");
}

std::string serialize_fact(const ChartFact& fact) { return detail::fact_to_json(fact).dump(); }

}  // namespace chartvec
