#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chartvec/corpus.hpp"
#include "chartvec/encoder.hpp"
#include "chartvec/hyper.hpp"
#include "chartvec/learning.hpp"
#include "chartvec/semantics.hpp"

namespace chartvec {

struct IndexEntry {
  ChartId chart_id;
  std::string story_id;
  std::size_t position = 0;
  std::string dataset_id;
  std::vector<double> vector;
  bool operator==(const IndexEntry&) const = default;
};

/// Immutable after construction. One entry per chart, uniform dimension.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  /// Throws Error{validation} on duplicate ids, Error{shape} on mixed dimensions.
  explicit EmbeddingIndex(std::vector<IndexEntry> entries);

  std::span<const IndexEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dimension() const { return entries_.empty() ? 0 : entries_.front().vector.size(); }

  /// Position in entries(), or nullopt.
  std::optional<std::size_t> find(std::string_view chart_id) const;

  bool operator==(const EmbeddingIndex&) const = default;

 private:
  std::vector<IndexEntry> entries_;
};

/// Infer-mode embedding of every chart in corpus order.
EmbeddingIndex build_index(const Corpus& corpus, const VectorStore& store,
                           const EncoderParams& params, const EncoderConfig& config);

/// TSV: header, then `chart_id story_id position dataset_id v1..vD`.
std::string index_tsv(const EmbeddingIndex& index);
void save_index(const std::filesystem::path& path, const EmbeddingIndex& index);
EmbeddingIndex parse_index(std::string_view tsv);
EmbeddingIndex load_index(const std::filesystem::path& path);

enum class Scope : std::uint8_t { same_dataset, all };
std::string_view to_string(Scope s);
Scope parse_scope(std::string_view name);

struct Neighbor {
  ChartId chart_id;
  double distance = 0.0;
  bool operator==(const Neighbor&) const = default;
};

/// Up to k candidates by ascending Euclidean distance, ties by chart id. The
/// anchor itself is never returned. Throws Error{not_found} for an unknown
/// anchor and Error{domain} when the scope leaves no candidates.
std::vector<Neighbor> nearest(const EmbeddingIndex& index, std::string_view anchor, Scope scope,
                              std::size_t k);

struct AnchorDetail {
  ChartId anchor;
  std::optional<ChartId> retrieved;  // empty when the anchor has no same-dataset peer
  double distance = 0.0;
  bool same_story = false;
  std::size_t gap = 0;  // |position difference|, meaningful when same_story
  bool top2 = false;
  bool top3 = false;
};

struct MetricsReport {
  double top2 = 0.0;
  double top3 = 0.0;
  double cooccurrence = 0.0;
  std::size_t n_anchors = 0;  // scored anchors
  std::size_t excluded = 0;   // anchors without a same-dataset candidate
  std::size_t gap2 = 2;
  std::size_t gap3 = 3;
  std::vector<AnchorDetail> details;
};

/// Nearest same-dataset chart per anchor; a hit needs the same visualization
/// and, for top-k, a position gap of at most gapk.
MetricsReport compute_metrics(const EmbeddingIndex& index, std::size_t gap2 = 2,
                              std::size_t gap3 = 3);

/// Expected metrics when the retrieved chart is a uniformly random
/// same-dataset candidate.
MetricsReport random_baseline(const EmbeddingIndex& index, std::size_t gap2 = 2,
                              std::size_t gap3 = 3);

std::string metrics_json(const MetricsReport& report, bool with_details = false);
std::string metrics_table(const MetricsReport& report);

/// Everything needed to go from a training corpus to parameters.
struct TrainingRun {
  TrainResult result;
  std::size_t windows = 0;
  std::size_t samples = 0;
  std::size_t duplicates_removed = 0;
};

/// build_samples -> encode_samples -> train, all seeded from hyper.seed.
TrainingRun train_on_corpus(const Corpus& train, const VectorStore& store,
                            const EncoderConfig& config, const HyperParams& hyper,
                            const EpochCallback& on_epoch = {});

enum class Variant : std::uint8_t {
  full,
  no_linear_interpolation,
  no_classification,
  no_fact_schema,
  no_fact_semantics,
  no_word_pooling,
  words_avg_pooling,
  word_max_pooling,
  words_max_pooling,
  no_pos,
  no_fc,
};

inline constexpr std::size_t kVariantCount = 11;

std::string_view to_string(Variant v);
/// Throws Error{invalid_argument} for unknown names.
Variant parse_variant(std::string_view name);
std::vector<Variant> all_variants();

struct AblationConfig {
  Variant variant = Variant::full;
  EncoderConfig config;
  HyperParams hyper;
};

/// Applies the variant's switch set on top of the given base settings.
AblationConfig make_ablation(Variant v, const EncoderConfig& base, const HyperParams& hyper);

struct AblationOptions {
  double test_fraction = 0.0;  // 0 evaluates on the training corpus itself
  std::uint64_t split_seed = 0;
  std::size_t gap2 = 2;
  std::size_t gap3 = 3;
};

struct AblationRow {
  Variant variant = Variant::full;
  bool ok = false;
  std::string error;
  MetricsReport metrics;
  LossBreakdown final_loss;
  bool l1_masked = false;
  bool l2_masked = false;
  double wall_ms = 0.0;
  std::size_t peak_bytes = 0;
};

using VariantCallback = std::function<void(const AblationRow&)>;

/// Trains and evaluates each variant from the same seed and split. A failing
/// variant is flagged in its row and the others still run.
std::vector<AblationRow> run_ablation(const Corpus& corpus, const VectorStore& store,
                                      const EncoderConfig& base, const HyperParams& hyper,
                                      std::span<const Variant> variants,
                                      const AblationOptions& options,
                                      const VariantCallback& on_variant = {});

/// `variant,top2,top3,cooccurrence,wall_ms,peak_bytes`
std::string ablation_csv(std::span<const AblationRow> rows);
std::string ablation_table(std::span<const AblationRow> rows);

}  // namespace chartvec
