#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "chartvec/chart_fact.hpp"
#include "chartvec/encoder.hpp"
#include "chartvec/hyper.hpp"
#include "chartvec/learning.hpp"
#include "chartvec/semantics.hpp"

namespace chartvec {

inline constexpr std::size_t kMinChartsPerVisualization = 3;

enum class Domain : std::uint8_t {
  economy,
  sports,
  society,
  health,
  politics,
  industry,
  recreation,
  food,
  education,
  ecology,
};

enum class VisKind : std::uint8_t { data_story, dashboard };

std::string_view to_string(Domain d);
std::string_view to_string(VisKind k);
Domain parse_domain(std::string_view name);
VisKind parse_vis_kind(std::string_view name);

struct ChartEntry {
  ChartId id;
  ChartFact fact;
  bool operator==(const ChartEntry&) const = default;
};

/// A data story or dashboard: an ordered list of at least three charts.
struct MultiViewVis {
  std::string id;
  std::string dataset_id;
  Domain domain = Domain::economy;
  VisKind kind = VisKind::data_story;
  std::vector<ChartEntry> charts;
  bool operator==(const MultiViewVis&) const = default;
};

struct Corpus {
  std::vector<MultiViewVis> visualizations;

  std::size_t chart_count() const;
  /// dataset_id -> indices into `visualizations`, in corpus order.
  std::map<std::string, std::vector<std::size_t>> by_dataset() const;
  bool operator==(const Corpus&) const = default;
};

struct CorpusViolation {
  std::string visualization;
  std::size_t position = 0;  // chart position; npos for visualization-level issues
  std::string chart_id;
  std::string message;

  std::string describe() const;
};

struct CorpusReadResult {
  Corpus corpus;
  std::vector<CorpusViolation> violations;  // strict mode: everything found
  std::vector<std::string> warnings;        // lenient mode: what was dropped
};

/// Parses and validates a corpus. Structural JSON problems throw Error{parse};
/// chart-level problems are collected. In lenient mode offending charts, and
/// visualizations left with fewer than three charts, are dropped with warnings.
/// Duplicate chart ids across the corpus are always reported as violations.
CorpusReadResult read_corpus(std::string_view json_text, bool lenient = false);
CorpusReadResult read_corpus_file(const std::filesystem::path& path, bool lenient = false);

/// Strict load: throws Error{validation} listing every violation.
Corpus load_corpus(const std::filesystem::path& path, bool lenient = false);

std::string serialize_corpus(const Corpus& corpus);

/// Dataset-level split: every visualization of a dataset lands on the same
/// side. The test side gets round(fraction * datasets) datasets, clamped to
/// [1, datasets - 1]. Throws Error{domain} with fewer than two datasets.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double test_fraction,
                                       std::uint64_t seed);

struct Quadruple {
  ChartId prev;
  ChartId mid;
  ChartId next;
  ChartId negative;
  std::string visualization;  // provenance of the positive triple
  std::size_t window = 0;     // position of `mid` within that visualization
  bool operator==(const Quadruple&) const = default;
};

struct SampleSet {
  std::vector<Quadruple> samples;
  std::size_t windows = 0;
  std::size_t duplicates_removed = 0;
};

/// One window per interior chart of every visualization, each paired with
/// `negatives_per_window` negatives drawn with replacement; duplicate
/// quadruples are then removed. Throws Error{domain} when no visualization
/// has a negative candidate.
SampleSet build_samples(const Corpus& train, std::uint32_t negatives_per_window,
                        NegativePolicy policy, std::uint64_t seed);

/// Model inputs for a sample set. Owns the inputs the training samples
/// point into, so it is move-only.
struct EncodedSamples {
  std::vector<ChartInput> inputs;
  std::unordered_map<ChartId, std::size_t> slot;
  std::vector<TrainingSample> samples;

  EncodedSamples() = default;
  EncodedSamples(EncodedSamples&&) = default;
  EncodedSamples& operator=(EncodedSamples&&) = default;
  EncodedSamples(const EncodedSamples&) = delete;
  EncodedSamples& operator=(const EncodedSamples&) = delete;
};

EncodedSamples encode_samples(const SampleSet& set, const Corpus& corpus,
                              const VectorStore& store, const EncoderConfig& config);

/// Converts a Calliope-style story export into the corpus schema.
Corpus import_calliope(std::string_view json_text);
Corpus import_calliope_file(const std::filesystem::path& path);

}  // namespace chartvec
