#include "chartvec/evaluation.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "chartvec/error.hpp"
#include "chartvec/rng.hpp"
#include "json.hpp"

namespace chartvec {

namespace {

constexpr std::uint64_t kSampleStream = 4;

constexpr std::array<std::string_view, kVariantCount> kVariantNames = {
    "full",
    "no-linear-interpolation",
    "no-classification",
    "no-fact-schema",
    "no-fact-semantics",
    "no-word-pooling",
    "words-avg-pooling",
    "word-max-pooling",
    "words-max-pooling",
    "no-pos",
    "no-fc",
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.emplace_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw Error(ErrorCode::parse,
                "index line " + std::to_string(line) + ": bad number \"" + s + "\"");
  }
  return v;
}

std::string pad(std::string s, std::size_t width, bool right) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

// Renders rows as aligned columns; column 0 is left-aligned, the rest right.
std::string render_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& r : rows) {
    widths.resize(std::max(widths.size(), r.size()), 0);
    for (std::size_t c = 0; c < r.size(); ++c) {
      // Count code points so the em dash placeholder aligns.
      std::size_t n = 0;
      for (unsigned char ch : r[c]) n += (ch & 0xC0) != 0x80;
      widths[c] = std::max(widths[c], n);
    }
  }
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      std::size_t n = 0;
      for (unsigned char ch : r[c]) n += (ch & 0xC0) != 0x80;
      const std::size_t extra = r[c].size() - n;
      if (c > 0) out += "  ";
      out += pad(r[c], widths[c] + extra, c > 0);
    }
    out += '\n';
  }
  return out;
}

}  // namespace

EmbeddingIndex::EmbeddingIndex(std::vector<IndexEntry> entries) : entries_(std::move(entries)) {
  std::unordered_set<std::string_view> ids;
  for (const auto& e : entries_) {
    if (!ids.insert(e.chart_id).second) {
      throw Error(ErrorCode::validation, "duplicate chart id in index: " + e.chart_id);
    }
    if (e.vector.size() != entries_.front().vector.size()) {
      throw Error(ErrorCode::shape, "index vectors differ in dimension at " + e.chart_id);
    }
  }
}

std::optional<std::size_t> EmbeddingIndex::find(std::string_view chart_id) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].chart_id == chart_id) return i;
  }
  return std::nullopt;
}

EmbeddingIndex build_index(const Corpus& corpus, const VectorStore& store,
                           const EncoderParams& params, const EncoderConfig& config) {
  check_shapes(params, config);
  std::vector<ChartInput> inputs;
  std::vector<IndexEntry> entries;
  for (const auto& vis : corpus.visualizations) {
    for (std::size_t p = 0; p < vis.charts.size(); ++p) {
      inputs.push_back(encode_chart(vis.charts[p].fact, store, config));
      entries.push_back({vis.charts[p].id, vis.id, p, vis.dataset_id, {}});
    }
  }
  if (entries.empty()) return {};
  std::vector<const ChartInput*> ptrs;
  ptrs.reserve(inputs.size());
  for (const auto& in : inputs) ptrs.push_back(&in);
  const Eigen::MatrixXd out = forward_infer(ptrs, params, config);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto row = out.row(static_cast<Eigen::Index>(i));
    entries[i].vector.assign(row.begin(), row.end());
  }
  return EmbeddingIndex(std::move(entries));
}

std::string index_tsv(const EmbeddingIndex& index) {
  std::string out = "chart_id\tstory_id\tposition\tdataset_id";
  for (std::size_t d = 0; d < index.dimension(); ++d) out += "\tv" + std::to_string(d + 1);
  out += '\n';
  for (const auto& e : index.entries()) {
    out += e.chart_id + '\t' + e.story_id + '\t' + std::to_string(e.position) + '\t' +
           e.dataset_id;
    for (double v : e.vector) out += '\t' + format_double(v);
    out += '\n';
  }
  return out;
}

void save_index(const std::filesystem::path& path, const EmbeddingIndex& index) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << index_tsv(index);
  if (!out) throw Error(ErrorCode::io, "write error on " + path.string());
}

EmbeddingIndex parse_index(std::string_view tsv) {
  std::vector<IndexEntry> entries;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  std::size_t start = 0;
  while (start < tsv.size()) {
    auto end = tsv.find('\n', start);
    if (end == std::string_view::npos) end = tsv.size();
    std::string_view line = tsv.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto cols = split_tabs(line);
    if (line_no == 1) {
      if (cols.size() < 4 || cols[0] != "chart_id" || cols[1] != "story_id" ||
          cols[2] != "position" || cols[3] != "dataset_id") {
        throw Error(ErrorCode::parse, "index line 1: missing header");
      }
      dim = cols.size() - 4;
      continue;
    }
    if (line.empty()) continue;
    if (cols.size() != dim + 4) {
      throw Error(ErrorCode::shape, "index line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(dim + 4) + " columns, found " +
                                        std::to_string(cols.size()));
    }
    IndexEntry e;
    e.chart_id = cols[0];
    e.story_id = cols[1];
    const double pos = parse_number(cols[2], line_no);
    if (pos < 0 || pos != std::floor(pos)) {
      throw Error(ErrorCode::parse, "index line " + std::to_string(line_no) + ": bad position");
    }
    e.position = static_cast<std::size_t>(pos);
    e.dataset_id = cols[3];
    e.vector.reserve(dim);
    for (std::size_t d = 0; d < dim; ++d) e.vector.push_back(parse_number(cols[4 + d], line_no));
    entries.push_back(std::move(e));
  }
  if (line_no == 0) throw Error(ErrorCode::parse, "index is empty (no header)");
  return EmbeddingIndex(std::move(entries));
}

EmbeddingIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_index(ss.str());
}

std::string_view to_string(Scope s) { return s == Scope::same_dataset ? "same-dataset" : "all"; }

Scope parse_scope(std::string_view name) {
  if (name == "same-dataset") return Scope::same_dataset;
  if (name == "all") return Scope::all;
  throw Error(ErrorCode::invalid_argument, "unknown scope \"" + std::string(name) + "\"");
}

std::vector<Neighbor> nearest(const EmbeddingIndex& index, std::string_view anchor, Scope scope,
                              std::size_t k) {
  const auto a = index.find(anchor);
  if (!a) throw Error(ErrorCode::not_found, "unknown anchor " + std::string(anchor));
  const auto& entries = index.entries();
  const IndexEntry& self = entries[*a];
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i == *a) continue;
    if (scope == Scope::same_dataset && entries[i].dataset_id != self.dataset_id) continue;
    out.push_back({entries[i].chart_id, euclidean(self.vector, entries[i].vector)});
  }
  if (out.empty()) {
    throw Error(ErrorCode::domain, "no candidates for anchor " + std::string(anchor) +
                                       " in scope " + std::string(to_string(scope)));
  }
  std::sort(out.begin(), out.end(), [](const Neighbor& x, const Neighbor& y) {
    if (x.distance != y.distance) return x.distance < y.distance;
    return x.chart_id < y.chart_id;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

MetricsReport compute_metrics(const EmbeddingIndex& index, std::size_t gap2, std::size_t gap3) {
  if (index.empty()) throw Error(ErrorCode::domain, "cannot evaluate an empty index");
  MetricsReport report;
  report.gap2 = gap2;
  report.gap3 = gap3;
  std::size_t hits2 = 0, hits3 = 0, hits_co = 0;
  const auto entries = index.entries();
  for (const auto& e : entries) {
    AnchorDetail d;
    d.anchor = e.chart_id;
    std::optional<std::size_t> best;
    double best_dist = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& c = entries[i];
      if (c.chart_id == e.chart_id || c.dataset_id != e.dataset_id) continue;
      const double dist = euclidean(e.vector, c.vector);
      if (!best || dist < best_dist ||
          (dist == best_dist && c.chart_id < entries[*best].chart_id)) {
        best = i;
        best_dist = dist;
      }
    }
    if (!best) {
      ++report.excluded;
      report.details.push_back(std::move(d));
      continue;
    }
    const auto& r = entries[*best];
    d.retrieved = r.chart_id;
    d.distance = best_dist;
    d.same_story = r.story_id == e.story_id;
    if (d.same_story) {
      d.gap = r.position > e.position ? r.position - e.position : e.position - r.position;
      d.top2 = d.gap <= gap2;
      d.top3 = d.gap <= gap3;
    }
    ++report.n_anchors;
    hits_co += d.same_story;
    hits2 += d.top2;
    hits3 += d.top3;
    report.details.push_back(std::move(d));
  }
  if (report.n_anchors > 0) {
    const double n = static_cast<double>(report.n_anchors);
    report.top2 = static_cast<double>(hits2) / n;
    report.top3 = static_cast<double>(hits3) / n;
    report.cooccurrence = static_cast<double>(hits_co) / n;
  }
  return report;
}

MetricsReport random_baseline(const EmbeddingIndex& index, std::size_t gap2, std::size_t gap3) {
  if (index.empty()) throw Error(ErrorCode::domain, "cannot evaluate an empty index");
  MetricsReport report;
  report.gap2 = gap2;
  report.gap3 = gap3;
  const auto entries = index.entries();
  double s2 = 0.0, s3 = 0.0, sc = 0.0;
  for (const auto& e : entries) {
    std::size_t candidates = 0, co = 0, in2 = 0, in3 = 0;
    for (const auto& c : entries) {
      if (c.chart_id == e.chart_id || c.dataset_id != e.dataset_id) continue;
      ++candidates;
      if (c.story_id != e.story_id) continue;
      const std::size_t gap =
          c.position > e.position ? c.position - e.position : e.position - c.position;
      ++co;
      in2 += gap <= gap2;
      in3 += gap <= gap3;
    }
    if (candidates == 0) {
      ++report.excluded;
      continue;
    }
    ++report.n_anchors;
    const double n = static_cast<double>(candidates);
    sc += static_cast<double>(co) / n;
    s2 += static_cast<double>(in2) / n;
    s3 += static_cast<double>(in3) / n;
  }
  if (report.n_anchors > 0) {
    const double n = static_cast<double>(report.n_anchors);
    report.top2 = s2 / n;
    report.top3 = s3 / n;
    report.cooccurrence = sc / n;
  }
  return report;
}

std::string metrics_json(const MetricsReport& report, bool with_details) {
  nlohmann::ordered_json j;
  j["top2"] = report.top2;
  j["top3"] = report.top3;
  j["cooccurrence"] = report.cooccurrence;
  j["n_anchors"] = report.n_anchors;
  j["excluded"] = report.excluded;
  j["gap2"] = report.gap2;
  j["gap3"] = report.gap3;
  if (with_details) {
    auto& rows = j["details"] = nlohmann::ordered_json::array();
    for (const auto& d : report.details) {
      nlohmann::ordered_json r;
      r["anchor"] = d.anchor;
      if (d.retrieved) {
        r["retrieved"] = *d.retrieved;
        r["distance"] = d.distance;
        r["same_story"] = d.same_story;
        r["gap"] = d.same_story ? nlohmann::ordered_json(d.gap) : nlohmann::ordered_json();
        r["top2"] = d.top2;
        r["top3"] = d.top3;
      } else {
        r["retrieved"] = nullptr;
        r["excluded"] = true;
      }
      rows.push_back(std::move(r));
    }
  }
  return j.dump(2) + "\n";
}

std::string metrics_table(const MetricsReport& report) {
  std::vector<std::vector<std::string>> rows = {
      {"metric", "value"},
      {"top-" + std::to_string(report.gap2), fixed(report.top2, 4)},
      {"top-" + std::to_string(report.gap3), fixed(report.top3, 4)},
      {"co-occurrence", fixed(report.cooccurrence, 4)},
      {"anchors", std::to_string(report.n_anchors)},
      {"excluded", std::to_string(report.excluded)},
  };
  return render_table(rows);
}

TrainingRun train_on_corpus(const Corpus& train, const VectorStore& store,
                            const EncoderConfig& config, const HyperParams& hyper,
                            const EpochCallback& on_epoch) {
  config.validate();
  validate(hyper);
  const SampleSet set = build_samples(train, hyper.negatives_per_window, hyper.negative_policy,
                                      derive_seed(hyper.seed, kSampleStream));
  const EncodedSamples encoded = encode_samples(set, train, store, config);
  TrainingRun run;
  run.windows = set.windows;
  run.samples = set.samples.size();
  run.duplicates_removed = set.duplicates_removed;
  run.result = chartvec::train(encoded.samples, config, hyper, on_epoch);
  return run;
}

std::string_view to_string(Variant v) { return kVariantNames.at(static_cast<std::size_t>(v)); }

Variant parse_variant(std::string_view name) {
  const auto it = std::find(kVariantNames.begin(), kVariantNames.end(), name);
  if (it == kVariantNames.end()) {
    throw Error(ErrorCode::invalid_argument, "unknown variant \"" + std::string(name) + "\"");
  }
  return static_cast<Variant>(it - kVariantNames.begin());
}

std::vector<Variant> all_variants() {
  std::vector<Variant> out;
  for (std::size_t i = 0; i < kVariantCount; ++i) out.push_back(static_cast<Variant>(i));
  return out;
}

AblationConfig make_ablation(Variant v, const EncoderConfig& base, const HyperParams& hyper) {
  AblationConfig a{v, base, hyper};
  switch (v) {
    case Variant::full: break;
    case Variant::no_linear_interpolation: a.hyper.use_interpolation = false; break;
    case Variant::no_classification: a.hyper.use_triplet = false; break;
    case Variant::no_fact_schema: a.config.use_schema = false; break;
    case Variant::no_fact_semantics: a.config.use_semantics = false; break;
    case Variant::no_word_pooling: a.config.semantics.pooling = Pooling::none; break;
    case Variant::words_avg_pooling: a.config.semantics.pooling = Pooling::words_avg; break;
    case Variant::word_max_pooling: a.config.semantics.pooling = Pooling::interval_max; break;
    case Variant::words_max_pooling: a.config.semantics.pooling = Pooling::words_max; break;
    case Variant::no_pos: a.config.semantics.use_positions = false; break;
    case Variant::no_fc: a.config.use_fc = false; break;
  }
  return a;
}

std::vector<AblationRow> run_ablation(const Corpus& corpus, const VectorStore& store,
                                      const EncoderConfig& base, const HyperParams& hyper,
                                      std::span<const Variant> variants,
                                      const AblationOptions& options,
                                      const VariantCallback& on_variant) {
  if (variants.empty()) throw Error(ErrorCode::invalid_argument, "no ablation variants given");
  Corpus train_part;
  Corpus test_part;
  if (options.test_fraction > 0.0) {
    std::tie(train_part, test_part) =
        split_corpus(corpus, options.test_fraction, options.split_seed);
  } else {
    train_part = corpus;
    test_part = corpus;
  }
  std::vector<AblationRow> rows;
  for (const Variant v : variants) {
    const AblationConfig a = make_ablation(v, base, hyper);
    AblationRow row;
    row.variant = v;
    row.l1_masked = !a.hyper.use_interpolation;
    row.l2_masked = !a.hyper.use_triplet;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const TrainingRun run = train_on_corpus(train_part, store, a.config, a.hyper);
      const EmbeddingIndex index = build_index(test_part, store, run.result.params, a.config);
      row.metrics = compute_metrics(index, options.gap2, options.gap3);
      if (!run.result.history.empty()) row.final_loss = run.result.history.back().loss;
      row.peak_bytes = run.result.peak_bytes;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (on_variant) on_variant(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "variant,top2,top3,cooccurrence,wall_ms,peak_bytes\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.variant)) + ',';
    if (r.ok) {
      out += format_double(r.metrics.top2) + ',' + format_double(r.metrics.top3) + ',' +
             format_double(r.metrics.cooccurrence);
    } else {
      out += ",,";
    }
    out += ',' + fixed(r.wall_ms, 1) + ',' + std::to_string(r.peak_bytes) + '\n';
  }
  return out;
}

std::string ablation_table(std::span<const AblationRow> rows) {
  const std::string dash = "—";
  std::vector<std::vector<std::string>> table = {
      {"variant", "top-2", "top-3", "co-occurrence", "l1", "l2", "wall_ms", "peak_bytes",
       "status"}};
  for (const auto& r : rows) {
    std::vector<std::string> line{std::string(to_string(r.variant))};
    if (r.ok) {
      line.push_back(fixed(r.metrics.top2, 4));
      line.push_back(fixed(r.metrics.top3, 4));
      line.push_back(fixed(r.metrics.cooccurrence, 4));
      line.push_back(r.l1_masked ? dash : fixed(r.final_loss.l1, 4));
      line.push_back(r.l2_masked ? dash : fixed(r.final_loss.l2, 4));
    } else {
      for (int i = 0; i < 5; ++i) line.push_back(dash);
    }
    line.push_back(fixed(r.wall_ms, 1));
    line.push_back(std::to_string(r.peak_bytes));
    line.push_back(r.ok ? "ok" : "FAILED: " + r.error);
    table.push_back(std::move(line));
  }
  return render_table(table);
}

}  // namespace chartvec
