#include "chartvec/semantics.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "chartvec/error.hpp"
#include "chartvec/rng.hpp"

namespace chartvec {

namespace {

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Non-ASCII bytes belong to words so UTF-8 text survives segmentation.
bool is_word_byte(char c) {
  return is_upper(c) || is_lower(c) || is_digit(c) || static_cast<unsigned char>(c) >= 0x80;
}

void push_location(std::vector<Token>& out, std::string_view text, Location loc) {
  for (auto& w : segment_words(text)) out.push_back({std::move(w), loc});
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (is_upper(c)) c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> segment_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (!is_word_byte(c)) {
      flush();
      continue;
    }
    if (is_upper(c) && !current.empty()) {
      const char prev = current.back();
      const bool next_lower = i + 1 < text.size() && is_lower(text[i + 1]);
      // fooBar -> foo|Bar, HTTPServer -> HTTP|Server
      if (is_lower(prev) || (is_upper(prev) && next_lower)) flush();
    }
    current += c;
  }
  flush();
  return words;
}

std::vector<Token> extract_tokens(const ChartFact& fact) {
  std::vector<Token> out;
  for (const auto& f : fact.subspace) push_location(out, f.field, Location::subspace_field);
  for (const auto& f : fact.subspace) push_location(out, f.value, Location::subspace_value);
  if (fact.breakdown) push_location(out, fact.breakdown->name, Location::breakdown_field);
  if (fact.measure) push_location(out, fact.measure->field, Location::measure_field);
  if (fact.focus) {
    push_location(out, fact.focus->field.name, Location::focus_field);
    push_location(out, fact.focus->value, Location::focus_value);
  }
  for (const auto& text : meta_text(fact.meta)) push_location(out, text, Location::meta);
  return out;
}

VectorStore VectorStore::load(const std::filesystem::path& path, std::size_t dim) {
  if (dim != kWordDim) {
    throw Error(ErrorCode::invalid_argument,
                "embedding dimension must be 100, got " + std::to_string(dim));
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open vector store " + path.string());

  VectorStore store;
  store.loaded_ = true;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    std::vector<std::string> parts;
    for (std::string p; fields >> p;) parts.push_back(std::move(p));
    if (line_no == 1 && parts.size() == 1) continue;  // "<count> <dim>" header
    if (parts.size() != dim) {
      throw Error(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                        std::to_string(dim) + " components, got " +
                                        std::to_string(parts.size()));
    }
    WordVector v{};
    for (std::size_t i = 0; i < dim; ++i) {
      const auto& p = parts[i];
      const auto res = std::from_chars(p.data(), p.data() + p.size(), v[i]);
      if (res.ec != std::errc{} || res.ptr != p.data() + p.size() || !std::isfinite(v[i])) {
        throw Error(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) +
                                          ": bad component \"" + p + "\"");
      }
    }
    store.table_.try_emplace(ascii_lower(word), v);
  }
  if (in.bad()) throw Error(ErrorCode::io, "read error on " + path.string());
  return store;
}

VectorStore VectorStore::empty() {
  VectorStore s;
  s.loaded_ = true;
  return s;
}

void VectorStore::insert(std::string_view word, const WordVector& v) {
  loaded_ = true;
  table_.insert_or_assign(ascii_lower(word), v);
}

bool VectorStore::contains(std::string_view word) const {
  return table_.contains(ascii_lower(word));
}

WordVector VectorStore::lookup(std::string_view word) const {
  if (!loaded_) throw Error(ErrorCode::invalid_argument, "vector store not loaded");
  const std::string key = ascii_lower(word);
  if (const auto it = table_.find(key); it != table_.end()) return it->second;
  return oov_vector(key);
}

WordVector oov_vector(std::string_view word) {
  Rng rng(fnv1a(ascii_lower(word)));
  WordVector v{};
  double norm2 = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

PooledVector pool_word(const WordVector& v) {
  PooledVector out{};
  for (std::size_t j = 0; j < kPooledDim; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < kPoolWindow; ++i) sum += v[j * kPoolWindow + i];
    out[j] = sum / static_cast<double>(kPoolWindow);
  }
  return out;
}

PooledVector pool_word_max(const WordVector& v) {
  PooledVector out{};
  for (std::size_t j = 0; j < kPooledDim; ++j) {
    const auto first = v.begin() + static_cast<std::ptrdiff_t>(j * kPoolWindow);
    out[j] = *std::max_element(first, first + kPoolWindow);
  }
  return out;
}

std::string_view to_string(Pooling p) {
  switch (p) {
    case Pooling::interval_avg: return "interval-avg";
    case Pooling::none: return "none";
    case Pooling::words_avg: return "words-avg";
    case Pooling::interval_max: return "interval-max";
    case Pooling::words_max: return "words-max";
  }
  return "?";
}

std::size_t semantic_rows(const SemanticOptions& opts) {
  return opts.pooling == Pooling::words_avg || opts.pooling == Pooling::words_max ? 1
                                                                                   : opts.slots;
}

std::size_t semantic_width(const SemanticOptions& opts) {
  switch (opts.pooling) {
    case Pooling::interval_avg:
    case Pooling::interval_max:
      return kPooledDim + kLocationCount;
    default:
      return kWordDim + kLocationCount;
  }
}

SemanticBlock build_semantic_block(std::span<const Token> tokens, const VectorStore& store,
                                   const SemanticOptions& opts) {
  SemanticBlock block;
  block.rows = semantic_rows(opts);
  block.width = semantic_width(opts);
  block.cells.assign(block.rows * block.width, 0.0);

  const std::size_t used = std::min(tokens.size(), opts.slots);
  const std::size_t feat = block.width - kLocationCount;
  auto location_col = [&](const Token& t) {
    return feat + static_cast<std::size_t>(t.location) - 1;
  };

  if (opts.pooling == Pooling::words_avg || opts.pooling == Pooling::words_max) {
    if (used == 0) return block;
    const bool avg = opts.pooling == Pooling::words_avg;
    std::vector<double> row(block.width, avg ? 0.0 : -INFINITY);
    for (std::size_t t = 0; t < used; ++t) {
      const WordVector v = store.lookup(tokens[t].word);
      std::vector<double> loc(kLocationCount, 0.0);
      loc[static_cast<std::size_t>(tokens[t].location) - 1] = 1.0;
      for (std::size_t i = 0; i < kWordDim; ++i) {
        row[i] = avg ? row[i] + v[i] : std::max(row[i], v[i]);
      }
      for (std::size_t i = 0; i < kLocationCount; ++i) {
        row[feat + i] = avg ? row[feat + i] + loc[i] : std::max(row[feat + i], loc[i]);
      }
    }
    if (avg) {
      for (double& x : row) x /= static_cast<double>(used);
    }
    if (!opts.use_positions) std::fill(row.begin() + static_cast<std::ptrdiff_t>(feat), row.end(), 0.0);
    std::copy(row.begin(), row.end(), block.cells.begin());
    return block;
  }

  for (std::size_t t = 0; t < used; ++t) {
    const WordVector v = store.lookup(tokens[t].word);
    double* row = block.cells.data() + t * block.width;
    switch (opts.pooling) {
      case Pooling::interval_avg: {
        const auto p = pool_word(v);
        std::copy(p.begin(), p.end(), row);
        break;
      }
      case Pooling::interval_max: {
        const auto p = pool_word_max(v);
        std::copy(p.begin(), p.end(), row);
        break;
      }
      default:
        std::copy(v.begin(), v.end(), row);
        break;
    }
    if (opts.use_positions) row[location_col(tokens[t])] = 1.0;
  }
  return block;
}

}  // namespace chartvec
