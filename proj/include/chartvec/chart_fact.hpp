#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace chartvec {

enum class FieldType : std::uint8_t { temporal, numerical, categorical, geographical };

enum class ChartType : std::uint8_t {
  vertical_bar,
  horizontal_bar,
  grouped_bar,
  stacked_bar,
  line,
  area,
  pie,
  donut,
  scatter,
  bubble,
  treemap,
  map,
  radial_bar,
  progress,
  table,
};

enum class FactType : std::uint8_t {
  trend,
  categorization,
  difference,
  rank,
  extreme,
  association,
  proportion,
  distribution,
  outlier,
  value,
};

enum class Aggregation : std::uint8_t { count, sum, average, minimum, maximum };

inline constexpr std::size_t kFieldTypeCount = 4;
inline constexpr std::size_t kChartTypeCount = 15;
inline constexpr std::size_t kFactTypeCount = 10;
inline constexpr std::size_t kAggregationCount = 5;
inline constexpr std::size_t kMaxFilters = 3;

std::string_view to_string(FieldType v);
std::string_view to_string(ChartType v);
std::string_view to_string(FactType v);
std::string_view to_string(Aggregation v);

// Throw Error{parse} on unknown names.
FieldType parse_field_type(std::string_view name);
ChartType parse_chart_type(std::string_view name);
FactType parse_fact_type(std::string_view name);
Aggregation parse_aggregation(std::string_view name);

struct Filter {
  std::string field;
  std::string value;
  FieldType field_type = FieldType::categorical;
  bool operator==(const Filter&) const = default;
};

struct FieldRef {
  std::string name;
  FieldType field_type = FieldType::categorical;
  bool operator==(const FieldRef&) const = default;
};

struct MeasureSpec {
  std::string field;  // may be empty for count
  Aggregation aggregation = Aggregation::count;
  bool operator==(const MeasureSpec&) const = default;
};

struct Focus {
  FieldRef field;
  std::string value;
  bool operator==(const Focus&) const = default;
};

// Table-1 style meta information, one alternative per meta-bearing fact type.
namespace meta {
struct None {
  bool operator==(const None&) const = default;
};
enum class Direction : std::uint8_t { increasing, decreasing, no_trend };
struct Trend {
  Direction direction = Direction::increasing;
  bool operator==(const Trend&) const = default;
};
struct Categorization {
  std::int64_t count = 1;
  bool operator==(const Categorization&) const = default;
};
enum class Relation : std::uint8_t { lower, higher };
struct Difference {
  Relation relation = Relation::lower;
  bool operator==(const Difference&) const = default;
};
struct Rank {
  std::vector<std::string> top3;
  bool operator==(const Rank&) const = default;
};
enum class ExtremeKind : std::uint8_t { max, min };
struct Extreme {
  ExtremeKind kind = ExtremeKind::max;
  bool operator==(const Extreme&) const = default;
};
enum class Sign : std::uint8_t { positive, negative };
struct Association {
  Sign sign = Sign::positive;
  bool operator==(const Association&) const = default;
};
}  // namespace meta

using MetaInfo = std::variant<meta::None, meta::Trend, meta::Categorization,
                              meta::Difference, meta::Rank, meta::Extreme,
                              meta::Association>;

std::string_view to_string(meta::Direction v);
std::string_view to_string(meta::Relation v);
std::string_view to_string(meta::ExtremeKind v);
std::string_view to_string(meta::Sign v);

/// Kind name of a meta alternative as it appears in the "kind" JSON key.
std::string_view meta_kind_name(const MetaInfo& m);

/// Human-readable text a meta value contributes to the fact semantics,
/// e.g. "lower", "20 categories", or the top-three names.
std::vector<std::string> meta_text(const MetaInfo& m);

/// Whether the meta alternative is legal for the fact type. `None` is always legal.
bool meta_compatible(FactType type, const MetaInfo& m);

/// The 7-tuple description of a single chart.
struct ChartFact {
  ChartType type_c = ChartType::vertical_bar;
  FactType type_f = FactType::value;
  std::vector<Filter> subspace;
  std::optional<FieldRef> breakdown;
  std::optional<MeasureSpec> measure;
  std::optional<Focus> focus;
  MetaInfo meta = meta::None{};
  bool operator==(const ChartFact&) const = default;
};

using ChartId = std::string;

struct StoryRef {
  std::string story_id;
  std::size_t position = 0;
  bool operator==(const StoryRef&) const = default;
};

struct Violation {
  std::string field;  // dotted path, e.g. "subspace[1].value"
  std::string rule;
  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate_fact(const ChartFact& fact);

/// Parses one fact object from JSON text. Throws Error{parse} with a byte
/// position for syntax errors and a key path for schema errors.
ChartFact parse_fact_json(std::string_view text);

/// Canonical compact JSON with keys in 7-tuple order.
std::string serialize_fact(const ChartFact& fact);

}  // namespace chartvec
