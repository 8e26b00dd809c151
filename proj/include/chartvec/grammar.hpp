#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chartvec/chart_fact.hpp"

namespace chartvec::grammar {

inline constexpr std::size_t kRuleCount = 60;
inline constexpr std::size_t kMaxRules = 16;
inline constexpr std::size_t kMinDerivation = 8;
inline constexpr std::size_t kMaxDerivation = 13;

struct Rule {
  std::uint8_t id;
  std::string_view lhs;
  std::string_view rhs;
};

/// The fixed 60-rule fact-schema grammar, indexed by rule id.
std::span<const Rule> rules();

// First rule id of each production group; members are contiguous and follow
// the enum order of the alternative they select.
namespace first {
inline constexpr std::uint8_t root = 0;
inline constexpr std::uint8_t chart_type = 1;
inline constexpr std::uint8_t fact_type = 16;
inline constexpr std::uint8_t subspace = 26;  // empty, single, multi
inline constexpr std::uint8_t filter = 29;
inline constexpr std::uint8_t breakdown = 33;  // absent, present
inline constexpr std::uint8_t breakdown_field = 35;  // temporal, categorical
inline constexpr std::uint8_t measure = 37;
inline constexpr std::uint8_t focus = 42;  // absent, present
inline constexpr std::uint8_t focus_field = 44;
inline constexpr std::uint8_t meta = 48;
}  // namespace first

/// Meta alternatives distinguished by the grammar (12 rules).
enum class MetaRule : std::uint8_t {
  none,
  trend_increasing,
  trend_decreasing,
  trend_no_trend,
  categorization,
  difference_lower,
  difference_higher,
  rank,
  extreme_max,
  extreme_min,
  association_positive,
  association_negative,
};

MetaRule meta_rule(const MetaInfo& m);

using RuleSequence = std::vector<std::uint8_t>;

/// Leftmost derivation of the fact schema. Throws Error{validation} for invalid facts.
RuleSequence derive_rules(const ChartFact& fact);

/// 16x60 one-hot matrix, row-major; rows past the sequence are zero.
struct SchemaMatrix {
  static constexpr std::size_t rows = kMaxRules;
  static constexpr std::size_t cols = kRuleCount;
  std::array<double, rows * cols> cells{};

  double at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
  bool operator==(const SchemaMatrix&) const = default;
};

/// Throws Error{invalid_argument} for empty or over-long sequences and
/// out-of-range ids.
SchemaMatrix encode_one_hot(std::span<const std::uint8_t> seq);

/// Structural part of a fact; semantic strings are not recoverable from rules.
struct FactSkeleton {
  ChartType chart_type = ChartType::vertical_bar;
  FactType fact_type = FactType::value;
  std::vector<FieldType> filter_types;
  std::optional<FieldType> breakdown_type;
  Aggregation aggregation = Aggregation::count;
  std::optional<FieldType> focus_type;
  MetaRule meta = MetaRule::none;
  bool operator==(const FactSkeleton&) const = default;
};

FactSkeleton skeleton_of(const ChartFact& fact);

/// Parses a rule sequence back into its skeleton. Throws Error{parse} for
/// ill-formed or truncated sequences.
FactSkeleton decode_skeleton(std::span<const std::uint8_t> seq);

/// `id<TAB>lhs<TAB>rhs` per rule, newline-terminated.
std::string dump();

}  // namespace chartvec::grammar
