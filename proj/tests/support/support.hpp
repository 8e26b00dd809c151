#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include "chartvec/chart_fact.hpp"
#include "chartvec/corpus.hpp"
#include "chartvec/evaluation.hpp"
#include "chartvec/rng.hpp"

namespace testing {

inline std::filesystem::path data_dir() { return CHARTVEC_TEST_DATA; }
inline std::filesystem::path fixture_corpus() { return data_dir() / "fixture_corpus.json"; }
inline std::filesystem::path fixture_vectors() { return data_dir() / "fixture_vectors.txt"; }

/// Scratch directory unique to the calling test; wiped on creation.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("chartvec_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline chartvec::ChartFact fig2_fact() {
  using namespace chartvec;
  ChartFact f;
  f.type_c = ChartType::vertical_bar;
  f.type_f = FactType::difference;
  f.subspace = {{"Country", "China", FieldType::geographical},
                {"City", "Guizhou", FieldType::geographical}};
  f.breakdown = FieldRef{"Location", FieldType::categorical};
  f.measure = MeasureSpec{"Population", Aggregation::sum};
  f.meta = meta::Difference{meta::Relation::lower};
  return f;
}

inline const char* fig2_json() {
  return R"({"type_c":"vertical bar chart","type_f":"difference",)"
         R"("subspace":[{"field":"Country","value":"China","field_type":"geographical"},)"
         R"({"field":"City","value":"Guizhou","field_type":"geographical"}],)"
         R"("breakdown":{"field":"Location","field_type":"categorical"},)"
         R"("measure":{"field":"Population","aggregation":"sum"},"focus":null,)"
         R"("meta":{"kind":"difference","relation":"lower"}})";
}

inline std::string random_word(chartvec::Rng& rng) {
  static const char* kParts[] = {"Sales", "year", "Region", "city", "Price", "total", "Age",
                                 "group", "2018", "rate", "Count", "name", "X", "q3"};
  std::string s = kParts[rng.below(std::size(kParts))];
  const std::size_t extra = rng.below(3);
  for (std::size_t i = 0; i < extra; ++i) {
    s += rng.below(2) ? " " : "";
    s += kParts[rng.below(std::size(kParts))];
  }
  return s;
}

/// Uniform over every structural alternative the validator accepts.
inline chartvec::ChartFact random_fact(chartvec::Rng& rng) {
  using namespace chartvec;
  ChartFact f;
  f.type_c = static_cast<ChartType>(rng.below(kChartTypeCount));
  f.type_f = static_cast<FactType>(rng.below(kFactTypeCount));
  const std::size_t filters = rng.below(kMaxFilters + 1);
  for (std::size_t i = 0; i < filters; ++i) {
    f.subspace.push_back({random_word(rng), random_word(rng),
                          static_cast<FieldType>(rng.below(kFieldTypeCount))});
  }
  if (rng.below(2)) {
    f.breakdown = FieldRef{random_word(rng),
                           rng.below(2) ? FieldType::temporal : FieldType::categorical};
  }
  if (rng.below(4) != 0) {
    const auto agg = static_cast<Aggregation>(rng.below(kAggregationCount));
    f.measure = MeasureSpec{agg == Aggregation::count && rng.below(2) ? "" : random_word(rng), agg};
  }
  if (rng.below(2)) {
    f.focus = Focus{{random_word(rng), static_cast<FieldType>(rng.below(kFieldTypeCount))},
                    random_word(rng)};
  }
  if (rng.below(4) != 0) {
    switch (f.type_f) {
      case FactType::trend:
        f.meta = meta::Trend{static_cast<meta::Direction>(rng.below(3))};
        break;
      case FactType::categorization:
        f.meta = meta::Categorization{static_cast<std::int64_t>(1 + rng.below(30))};
        break;
      case FactType::difference:
        f.meta = meta::Difference{static_cast<meta::Relation>(rng.below(2))};
        break;
      case FactType::rank: {
        meta::Rank r;
        const std::size_t n = rng.below(4);
        for (std::size_t i = 0; i < n; ++i) r.top3.push_back(random_word(rng));
        f.meta = r;
        break;
      }
      case FactType::extreme:
        f.meta = meta::Extreme{static_cast<meta::ExtremeKind>(rng.below(2))};
        break;
      case FactType::association:
        f.meta = meta::Association{static_cast<meta::Sign>(rng.below(2))};
        break;
      default:
        break;
    }
  }
  return f;
}

/// Index with hand-placed vectors: entry i gets `vectors[i]`.
inline chartvec::EmbeddingIndex toy_index(
    const std::vector<std::tuple<std::string, std::string, std::size_t, std::string>>& meta,
    const std::vector<std::vector<double>>& vectors) {
  std::vector<chartvec::IndexEntry> entries;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    const auto& [id, story, pos, dataset] = meta[i];
    entries.push_back({id, story, pos, dataset, vectors[i]});
  }
  return chartvec::EmbeddingIndex(std::move(entries));
}

}  // namespace testing
