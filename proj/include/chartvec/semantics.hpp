#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "chartvec/chart_fact.hpp"

namespace chartvec {

inline constexpr std::size_t kWordDim = 100;
inline constexpr std::size_t kPoolWindow = 10;
inline constexpr std::size_t kPooledDim = kWordDim / kPoolWindow;
inline constexpr std::size_t kLocationCount = 7;
inline constexpr std::size_t kSemanticSlots = 25;

/// Where in the fact a word was found. Values are the 1-based location markers.
enum class Location : std::uint8_t {
  subspace_field = 1,
  subspace_value = 2,
  breakdown_field = 3,
  measure_field = 4,
  focus_field = 5,
  focus_value = 6,
  meta = 7,
};

struct Token {
  std::string word;
  Location location = Location::subspace_field;
  bool operator==(const Token&) const = default;
};

using WordVector = std::array<double, kWordDim>;
using PooledVector = std::array<double, kPooledDim>;

/// Splits a field string into words: whitespace, underscores, hyphens, other
/// ASCII punctuation and camelCase boundaries separate words.
std::vector<std::string> segment_words(std::string_view text);

/// Words from the seven semantic locations, in location order. Chart and fact
/// types are structural and never contribute tokens.
std::vector<Token> extract_tokens(const ChartFact& fact);

std::string ascii_lower(std::string_view s);

/// Read-only word-vector table keyed by lowercase word.
class VectorStore {
 public:
  VectorStore() = default;

  /// Text format: `word v1 ... v100` per line; an optional leading
  /// `<count> <dim>` header line is skipped. Throws Error{io} / Error{parse}.
  static VectorStore load(const std::filesystem::path& path, std::size_t dim = kWordDim);

  /// A loaded store with no entries; every lookup takes the OOV path.
  static VectorStore empty();

  void insert(std::string_view word, const WordVector& v);

  bool loaded() const { return loaded_; }
  std::size_t size() const { return table_.size(); }
  bool contains(std::string_view word) const;

  /// Case-insensitive lookup; unknown words get a deterministic unit vector
  /// seeded from the lowercase word bytes. Throws if the store is not loaded.
  WordVector lookup(std::string_view word) const;

 private:
  bool loaded_ = false;
  std::unordered_map<std::string, WordVector> table_;
};

WordVector oov_vector(std::string_view word);

/// Interval average: component j is the mean of v[10j .. 10j+9].
PooledVector pool_word(const WordVector& v);

/// Interval maximum over the same windows.
PooledVector pool_word_max(const WordVector& v);

/// How word vectors are reduced before fusion.
enum class Pooling : std::uint8_t {
  interval_avg,  // per word, 100 -> 10 by window means
  none,          // per word, full 100 components
  words_avg,     // one row: mean over all words
  interval_max,  // per word, 100 -> 10 by window maxima
  words_max,     // one row: elementwise max over all words
};

std::string_view to_string(Pooling p);

struct SemanticOptions {
  Pooling pooling = Pooling::interval_avg;
  bool use_positions = true;
  std::size_t slots = kSemanticSlots;
};

/// Row-major block of token rows, each `[word features | location one-hot]`.
/// The default layout is 25 x 17; padding rows are zero and follow real ones.
struct SemanticBlock {
  std::size_t rows = kSemanticSlots;
  std::size_t width = kPooledDim + kLocationCount;
  std::vector<double> cells = std::vector<double>(rows * width, 0.0);

  double at(std::size_t r, std::size_t c) const { return cells[r * width + c]; }
  bool operator==(const SemanticBlock&) const = default;
};

/// Shape produced for a given option set.
std::size_t semantic_rows(const SemanticOptions& opts);
std::size_t semantic_width(const SemanticOptions& opts);

/// Keeps the first `opts.slots` tokens; later tokens are dropped.
SemanticBlock build_semantic_block(std::span<const Token> tokens, const VectorStore& store,
                                   const SemanticOptions& opts = {});

}  // namespace chartvec
