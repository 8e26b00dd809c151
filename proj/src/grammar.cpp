#include "chartvec/grammar.hpp"

#include "chartvec/error.hpp"

namespace chartvec::grammar {

namespace {

constexpr std::array<Rule, kRuleCount> kRules = {{
    {0, "Fact", "ChartType FactType Subspace Breakdown Measure Focus Meta"},
    {1, "ChartType", "'vertical bar chart'"},
    {2, "ChartType", "'horizontal bar chart'"},
    {3, "ChartType", "'grouped bar chart'"},
    {4, "ChartType", "'stacked bar chart'"},
    {5, "ChartType", "'line chart'"},
    {6, "ChartType", "'area chart'"},
    {7, "ChartType", "'pie chart'"},
    {8, "ChartType", "'donut chart'"},
    {9, "ChartType", "'scatter plot'"},
    {10, "ChartType", "'bubble chart'"},
    {11, "ChartType", "'treemap'"},
    {12, "ChartType", "'map'"},
    {13, "ChartType", "'radial bar chart'"},
    {14, "ChartType", "'progress chart'"},
    {15, "ChartType", "'table'"},
    {16, "FactType", "'trend'"},
    {17, "FactType", "'categorization'"},
    {18, "FactType", "'difference'"},
    {19, "FactType", "'rank'"},
    {20, "FactType", "'extreme'"},
    {21, "FactType", "'association'"},
    {22, "FactType", "'proportion'"},
    {23, "FactType", "'distribution'"},
    {24, "FactType", "'outlier'"},
    {25, "FactType", "'value'"},
    {26, "Subspace", "<empty>"},
    {27, "Subspace", "Filter"},
    {28, "Subspace", "Filter Filter Filter?"},
    {29, "Filter", "temporal-field '=' value"},
    {30, "Filter", "numerical-field '=' value"},
    {31, "Filter", "categorical-field '=' value"},
    {32, "Filter", "geographical-field '=' value"},
    {33, "Breakdown", "<empty>"},
    {34, "Breakdown", "BreakdownField"},
    {35, "BreakdownField", "temporal-field"},
    {36, "BreakdownField", "categorical-field"},
    {37, "Measure", "'count' '(' field? ')'"},
    {38, "Measure", "'sum' '(' numerical-field ')'"},
    {39, "Measure", "'average' '(' numerical-field ')'"},
    {40, "Measure", "'minimum' '(' numerical-field ')'"},
    {41, "Measure", "'maximum' '(' numerical-field ')'"},
    {42, "Focus", "<empty>"},
    {43, "Focus", "FocusField '=' value"},
    {44, "FocusField", "temporal-field"},
    {45, "FocusField", "numerical-field"},
    {46, "FocusField", "categorical-field"},
    {47, "FocusField", "geographical-field"},
    {48, "Meta", "<empty>"},
    {49, "Meta", "'increasing'"},
    {50, "Meta", "'decreasing'"},
    {51, "Meta", "'no trend'"},
    {52, "Meta", "count 'categories'"},
    {53, "Meta", "'lower'"},
    {54, "Meta", "'higher'"},
    {55, "Meta", "top-1 top-2? top-3?"},
    {56, "Meta", "'max'"},
    {57, "Meta", "'min'"},
    {58, "Meta", "'positive'"},
    {59, "Meta", "'negative'"},
}};

constexpr bool ids_are_dense() {
  for (std::size_t i = 0; i < kRules.size(); ++i) {
    if (kRules[i].id != i) return false;
  }
  return true;
}
static_assert(ids_are_dense(), "rule ids must be a bijection onto 0..59");
static_assert(first::meta + 12 == kRuleCount);

template <typename E>
std::uint8_t offset(std::uint8_t base, E value) {
  return static_cast<std::uint8_t>(base + static_cast<std::uint8_t>(value));
}

std::uint8_t breakdown_field_rule(FieldType t) {
  return t == FieldType::temporal ? first::breakdown_field : first::breakdown_field + 1;
}

// Cursor over a rule sequence used by the decoder.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> seq) : seq_(seq) {}

  std::uint8_t take(std::uint8_t lo, std::size_t count, const char* what) {
    if (pos_ >= seq_.size()) {
      throw Error(ErrorCode::parse, std::string("derivation incomplete: expected ") + what);
    }
    const std::uint8_t id = seq_[pos_];
    if (id < lo || id >= lo + count) {
      throw Error(ErrorCode::parse, "rule " + std::to_string(id) + " at position " +
                                        std::to_string(pos_) + " cannot expand " + what);
    }
    ++pos_;
    return static_cast<std::uint8_t>(id - lo);
  }

  bool peek_in(std::uint8_t lo, std::size_t count) const {
    return pos_ < seq_.size() && seq_[pos_] >= lo && seq_[pos_] < lo + count;
  }

  bool done() const { return pos_ == seq_.size(); }

 private:
  std::span<const std::uint8_t> seq_;
  std::size_t pos_ = 0;
};

}  // namespace

std::span<const Rule> rules() { return kRules; }

MetaRule meta_rule(const MetaInfo& m) {
  struct Visitor {
    MetaRule operator()(const meta::None&) const { return MetaRule::none; }
    MetaRule operator()(const meta::Trend& t) const {
      return static_cast<MetaRule>(static_cast<int>(MetaRule::trend_increasing) +
                                   static_cast<int>(t.direction));
    }
    MetaRule operator()(const meta::Categorization&) const { return MetaRule::categorization; }
    MetaRule operator()(const meta::Difference& d) const {
      return d.relation == meta::Relation::lower ? MetaRule::difference_lower
                                                 : MetaRule::difference_higher;
    }
    MetaRule operator()(const meta::Rank&) const { return MetaRule::rank; }
    MetaRule operator()(const meta::Extreme& e) const {
      return e.kind == meta::ExtremeKind::max ? MetaRule::extreme_max : MetaRule::extreme_min;
    }
    MetaRule operator()(const meta::Association& a) const {
      return a.sign == meta::Sign::positive ? MetaRule::association_positive
                                            : MetaRule::association_negative;
    }
  };
  return std::visit(Visitor{}, m);
}

RuleSequence derive_rules(const ChartFact& fact) {
  const auto report = validate_fact(fact);
  if (!report.ok()) {
    const auto& v = report.violations.front();
    throw Error(ErrorCode::validation, "invalid fact: " + v.field + ": " + v.rule);
  }
  RuleSequence seq;
  seq.reserve(kMaxDerivation);
  seq.push_back(first::root);
  seq.push_back(offset(first::chart_type, fact.type_c));
  seq.push_back(offset(first::fact_type, fact.type_f));
  const std::size_t n = fact.subspace.size();
  seq.push_back(static_cast<std::uint8_t>(first::subspace + (n == 0 ? 0 : n == 1 ? 1 : 2)));
  for (const auto& f : fact.subspace) seq.push_back(offset(first::filter, f.field_type));
  if (fact.breakdown) {
    seq.push_back(first::breakdown + 1);
    seq.push_back(breakdown_field_rule(fact.breakdown->field_type));
  } else {
    seq.push_back(first::breakdown);
  }
  const Aggregation agg = fact.measure ? fact.measure->aggregation : Aggregation::count;
  seq.push_back(offset(first::measure, agg));
  if (fact.focus) {
    seq.push_back(first::focus + 1);
    seq.push_back(offset(first::focus_field, fact.focus->field.field_type));
  } else {
    seq.push_back(first::focus);
  }
  seq.push_back(offset(first::meta, meta_rule(fact.meta)));
  return seq;
}

SchemaMatrix encode_one_hot(std::span<const std::uint8_t> seq) {
  if (seq.empty()) throw Error(ErrorCode::invalid_argument, "empty rule sequence");
  if (seq.size() > kMaxRules) {
    throw Error(ErrorCode::invalid_argument,
                "rule sequence of length " + std::to_string(seq.size()) + " exceeds 16");
  }
  SchemaMatrix m;
  for (std::size_t r = 0; r < seq.size(); ++r) {
    if (seq[r] >= kRuleCount) {
      throw Error(ErrorCode::invalid_argument, "rule id " + std::to_string(seq[r]) +
                                                   " out of range");
    }
    m.cells[r * SchemaMatrix::cols + seq[r]] = 1.0;
  }
  return m;
}

FactSkeleton skeleton_of(const ChartFact& fact) {
  FactSkeleton s;
  s.chart_type = fact.type_c;
  s.fact_type = fact.type_f;
  for (const auto& f : fact.subspace) s.filter_types.push_back(f.field_type);
  if (fact.breakdown) s.breakdown_type = fact.breakdown->field_type;
  s.aggregation = fact.measure ? fact.measure->aggregation : Aggregation::count;
  if (fact.focus) s.focus_type = fact.focus->field.field_type;
  s.meta = meta_rule(fact.meta);
  return s;
}

FactSkeleton decode_skeleton(std::span<const std::uint8_t> seq) {
  Reader in(seq);
  FactSkeleton s;
  in.take(first::root, 1, "Fact");
  s.chart_type = static_cast<ChartType>(in.take(first::chart_type, kChartTypeCount, "ChartType"));
  s.fact_type = static_cast<FactType>(in.take(first::fact_type, kFactTypeCount, "FactType"));
  const auto cardinality = in.take(first::subspace, 3, "Subspace");
  const std::size_t min_filters = cardinality == 0 ? 0 : cardinality == 1 ? 1 : 2;
  const std::size_t max_filters = cardinality == 0 ? 0 : cardinality == 1 ? 1 : kMaxFilters;
  for (std::size_t i = 0; i < min_filters; ++i) {
    s.filter_types.push_back(
        static_cast<FieldType>(in.take(first::filter, kFieldTypeCount, "Filter")));
  }
  while (s.filter_types.size() < max_filters && in.peek_in(first::filter, kFieldTypeCount)) {
    s.filter_types.push_back(
        static_cast<FieldType>(in.take(first::filter, kFieldTypeCount, "Filter")));
  }
  if (in.take(first::breakdown, 2, "Breakdown") == 1) {
    s.breakdown_type = in.take(first::breakdown_field, 2, "BreakdownField") == 0
                           ? FieldType::temporal
                           : FieldType::categorical;
  }
  s.aggregation = static_cast<Aggregation>(in.take(first::measure, kAggregationCount, "Measure"));
  if (in.take(first::focus, 2, "Focus") == 1) {
    s.focus_type =
        static_cast<FieldType>(in.take(first::focus_field, kFieldTypeCount, "FocusField"));
  }
  s.meta = static_cast<MetaRule>(in.take(first::meta, 12, "Meta"));
  if (!in.done()) throw Error(ErrorCode::parse, "trailing rules after Meta");
  return s;
}

std::string dump() {
  std::string out;
  for (const auto& r : kRules) {
    out += std::to_string(r.id);
    out += '\t';
    out += r.lhs;
    out += '\t';
    out += r.rhs;
    out += '\n';
  }
  return out;
}

}  // namespace chartvec::grammar
