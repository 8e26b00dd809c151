#include "chartvec/chartvec.h"

#include <openssl/evp.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <new>
#include <string>
#include <vector>

#include "chartvec/chart_fact.hpp"
#include "chartvec/corpus.hpp"
#include "chartvec/encoder.hpp"
#include "chartvec/error.hpp"
#include "chartvec/evaluation.hpp"
#include "chartvec/grammar.hpp"
#include "chartvec/learning.hpp"
#include "chartvec/semantics.hpp"

struct chartvec_corpus {
  chartvec::Corpus corpus;
};

struct chartvec_vectors {
  chartvec::VectorStore store;
};

struct chartvec_model {
  chartvec::EncoderConfig config;
  chartvec::HyperParams hyper;
  chartvec::EncoderParams params;
  std::vector<chartvec::EpochRecord> history;
  std::uint64_t steps = 0;
  std::size_t windows = 0;
  std::size_t samples = 0;
  std::size_t duplicates_removed = 0;
  std::size_t peak_bytes = 0;
};

struct chartvec_index {
  chartvec::EmbeddingIndex index;
};

namespace {

using namespace chartvec;

thread_local std::string g_last_error;

chartvec_status fail(chartvec_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

chartvec_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return CHARTVEC_ERR_INVALID_ARGUMENT;
    case ErrorCode::io: return CHARTVEC_ERR_IO;
    case ErrorCode::parse: return CHARTVEC_ERR_PARSE;
    case ErrorCode::validation: return CHARTVEC_ERR_VALIDATION;
    case ErrorCode::shape: return CHARTVEC_ERR_SHAPE;
    case ErrorCode::version: return CHARTVEC_ERR_VERSION;
    case ErrorCode::diverged: return CHARTVEC_ERR_DIVERGED;
    case ErrorCode::not_found: return CHARTVEC_ERR_NOT_FOUND;
    case ErrorCode::domain: return CHARTVEC_ERR_DOMAIN;
  }
  return CHARTVEC_ERR_INTERNAL;
}

// Runs `fn`, translating exceptions into status codes.
template <typename Fn>
chartvec_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CHARTVEC_OK;
  } catch (const Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(CHARTVEC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CHARTVEC_ERR_INTERNAL, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::invalid_argument, what);
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void set_string(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

struct ModelSettings {
  EncoderConfig config;
  HyperParams hyper;
};

ModelSettings settings_from(const chartvec_train_options* o) {
  chartvec_train_options defaults;
  chartvec_train_options_init(&defaults);
  if (!o) o = &defaults;
  HyperParams h;
  h.alpha = o->alpha;
  h.beta = o->beta;
  h.margin = o->margin;
  h.learning_rate = o->learning_rate;
  h.batch_size = o->batch_size;
  h.epochs = o->epochs;
  h.seed = o->seed;
  h.use_interpolation = o->use_interpolation != 0;
  h.use_triplet = o->use_triplet != 0;
  h.negatives_per_window = o->negatives_per_window;
  if (o->negative_policy) h.negative_policy = parse_negative_policy(o->negative_policy);
  EncoderConfig c;
  c.dropout = o->dropout;
  const Variant v = o->variant ? parse_variant(o->variant) : Variant::full;
  const AblationConfig a = make_ablation(v, c, h);
  a.config.validate();
  validate(a.hyper);
  return {a.config, a.hyper};
}

chartvec_metrics to_c(const MetricsReport& r) {
  return {r.top2, r.top3, r.cooccurrence, r.n_anchors, r.excluded};
}

}  // namespace

extern "C" {

const char* chartvec_last_error(void) { return g_last_error.c_str(); }

const char* chartvec_status_name(chartvec_status status) {
  switch (status) {
    case CHARTVEC_OK: return "ok";
    case CHARTVEC_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CHARTVEC_ERR_IO: return "i/o error";
    case CHARTVEC_ERR_PARSE: return "parse error";
    case CHARTVEC_ERR_VALIDATION: return "validation error";
    case CHARTVEC_ERR_SHAPE: return "shape mismatch";
    case CHARTVEC_ERR_VERSION: return "unsupported version";
    case CHARTVEC_ERR_DIVERGED: return "training diverged";
    case CHARTVEC_ERR_NOT_FOUND: return "not found";
    case CHARTVEC_ERR_DOMAIN: return "domain error";
    case CHARTVEC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* chartvec_version(void) { return CHARTVEC_VERSION; }

void chartvec_free_string(char* s) { delete[] s; }

chartvec_status chartvec_file_sha256(const char* path, char out[65]) {
  return guarded([&] {
    require(path && out, "null argument");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, std::string("cannot open ") + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
      EVP_MD_CTX_free(ctx);
      throw Error(ErrorCode::io, "sha256 unavailable");
    }
    std::vector<char> buf(1 << 16);
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    if (in.bad()) throw Error(ErrorCode::io, std::string("read error on ") + path);
    for (unsigned int i = 0; i < len; ++i) std::snprintf(out + 2 * i, 3, "%02x", md[i]);
  });
}

chartvec_status chartvec_grammar_dump(char** out) {
  return guarded([&] {
    require(out, "null argument");
    *out = dup_string(grammar::dump());
  });
}

chartvec_status chartvec_fact_derive(const char* fact_json, int* rules, size_t capacity,
                                     size_t* count) {
  return guarded([&] {
    require(fact_json && count && (rules || capacity == 0), "null argument");
    const auto seq = grammar::derive_rules(parse_fact_json(fact_json));
    for (std::size_t i = 0; i < seq.size() && i < capacity; ++i) rules[i] = seq[i];
    *count = seq.size();
  });
}

chartvec_status chartvec_corpus_load(const char* path, int lenient, chartvec_corpus** out,
                                     char** report) {
  if (report) *report = nullptr;
  return guarded([&] {
    require(path && out, "null argument");
    *out = nullptr;
    auto result = read_corpus_file(path, lenient != 0);
    std::string lines;
    for (const auto& w : result.warnings) lines += w + '\n';
    for (const auto& v : result.violations) lines += v.describe() + '\n';
    if (!lines.empty()) set_string(report, lines);
    if (!result.violations.empty()) {
      throw Error(ErrorCode::validation,
                  std::string(path) + ": " + std::to_string(result.violations.size()) +
                      " violation(s)");
    }
    *out = new chartvec_corpus{std::move(result.corpus)};
  });
}

void chartvec_corpus_free(chartvec_corpus* corpus) { delete corpus; }

size_t chartvec_corpus_visualizations(const chartvec_corpus* corpus) {
  return corpus ? corpus->corpus.visualizations.size() : 0;
}

size_t chartvec_corpus_charts(const chartvec_corpus* corpus) {
  return corpus ? corpus->corpus.chart_count() : 0;
}

size_t chartvec_corpus_datasets(const chartvec_corpus* corpus) {
  return corpus ? corpus->corpus.by_dataset().size() : 0;
}

chartvec_status chartvec_corpus_split(const chartvec_corpus* corpus, double fraction,
                                      uint64_t seed, chartvec_corpus** train,
                                      chartvec_corpus** test) {
  return guarded([&] {
    require(corpus && train && test, "null argument");
    auto [a, b] = split_corpus(corpus->corpus, fraction, seed);
    *train = new chartvec_corpus{std::move(a)};
    *test = new chartvec_corpus{std::move(b)};
  });
}

chartvec_status chartvec_corpus_save(const chartvec_corpus* corpus, const char* path) {
  return guarded([&] {
    require(corpus && path, "null argument");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, std::string("cannot write ") + path);
    out << serialize_corpus(corpus->corpus);
    if (!out) throw Error(ErrorCode::io, std::string("write error on ") + path);
  });
}

chartvec_status chartvec_import_calliope(const char* in_path, const char* out_path) {
  return guarded([&] {
    require(in_path && out_path, "null argument");
    const Corpus corpus = import_calliope_file(in_path);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, std::string("cannot write ") + out_path);
    out << serialize_corpus(corpus);
    if (!out) throw Error(ErrorCode::io, std::string("write error on ") + out_path);
  });
}

chartvec_status chartvec_vectors_load(const char* path, chartvec_vectors** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new chartvec_vectors{VectorStore::load(path)};
  });
}

chartvec_status chartvec_vectors_empty(chartvec_vectors** out) {
  return guarded([&] {
    require(out, "null argument");
    *out = new chartvec_vectors{VectorStore::empty()};
  });
}

void chartvec_vectors_free(chartvec_vectors* vectors) { delete vectors; }

size_t chartvec_vectors_size(const chartvec_vectors* vectors) {
  return vectors ? vectors->store.size() : 0;
}

void chartvec_train_options_init(chartvec_train_options* options) {
  if (!options) return;
  const HyperParams h;
  const EncoderConfig c;
  options->alpha = h.alpha;
  options->beta = h.beta;
  options->margin = h.margin;
  options->learning_rate = h.learning_rate;
  options->batch_size = h.batch_size;
  options->epochs = h.epochs;
  options->seed = h.seed;
  options->use_interpolation = h.use_interpolation;
  options->use_triplet = h.use_triplet;
  options->negatives_per_window = h.negatives_per_window;
  options->negative_policy = "same-dataset-first";
  options->dropout = c.dropout;
  options->variant = nullptr;
}

chartvec_status chartvec_train(const chartvec_corpus* corpus, const chartvec_vectors* vectors,
                               const chartvec_train_options* options, chartvec_epoch_fn on_epoch,
                               void* user, chartvec_model** out) {
  return guarded([&] {
    require(corpus && vectors && out, "null argument");
    *out = nullptr;
    const ModelSettings s = settings_from(options);
    EpochCallback cb;
    if (on_epoch) {
      cb = [&](const EpochRecord& r) {
        const chartvec_epoch e{r.epoch,   r.loss.interp_term, r.loss.pair_term, r.loss.l1,
                               r.loss.l2, r.loss.total,       r.wall_ms};
        on_epoch(&e, user);
      };
    }
    TrainingRun run = train_on_corpus(corpus->corpus, vectors->store, s.config, s.hyper, cb);
    auto* m = new chartvec_model;
    m->config = s.config;
    m->hyper = s.hyper;
    m->params = std::move(run.result.params);
    m->history = std::move(run.result.history);
    m->steps = run.result.steps;
    m->windows = run.windows;
    m->samples = run.samples;
    m->duplicates_removed = run.duplicates_removed;
    m->peak_bytes = run.result.peak_bytes;
    *out = m;
  });
}

chartvec_status chartvec_model_info_get(const chartvec_model* model, chartvec_model_info* info) {
  return guarded([&] {
    require(model && info, "null argument");
    *info = {model->config.embedding_dim(), trainable_count(model->params), model->steps,
             model->windows, model->samples, model->duplicates_removed, model->peak_bytes};
  });
}

chartvec_status chartvec_model_history_csv(const chartvec_model* model, char** out) {
  return guarded([&] {
    require(model && out, "null argument");
    *out = dup_string(history_csv(model->history));
  });
}

chartvec_status chartvec_model_save(const chartvec_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "null argument");
    save_checkpoint(path, model->params, model->config, model->hyper);
  });
}

chartvec_status chartvec_model_load(const char* path, chartvec_model** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = nullptr;
    Checkpoint ck = load_checkpoint(path);
    auto* m = new chartvec_model;
    m->config = ck.config;
    m->hyper = ck.hyper;
    m->params = std::move(ck.params);
    *out = m;
  });
}

void chartvec_model_free(chartvec_model* model) { delete model; }

chartvec_status chartvec_embed(const chartvec_model* model, const chartvec_corpus* corpus,
                               const chartvec_vectors* vectors, chartvec_index** out) {
  return guarded([&] {
    require(model && corpus && vectors && out, "null argument");
    *out = nullptr;
    *out = new chartvec_index{
        build_index(corpus->corpus, vectors->store, model->params, model->config)};
  });
}

chartvec_status chartvec_index_save(const chartvec_index* index, const char* path) {
  return guarded([&] {
    require(index && path, "null argument");
    save_index(path, index->index);
  });
}

chartvec_status chartvec_index_load(const char* path, chartvec_index** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = nullptr;
    *out = new chartvec_index{load_index(path)};
  });
}

void chartvec_index_free(chartvec_index* index) { delete index; }

size_t chartvec_index_size(const chartvec_index* index) { return index ? index->index.size() : 0; }

size_t chartvec_index_dim(const chartvec_index* index) {
  return index ? index->index.dimension() : 0;
}

chartvec_status chartvec_nearest(const chartvec_index* index, const char* anchor,
                                 const char* scope, size_t k, chartvec_neighbor** out,
                                 size_t* count) {
  return guarded([&] {
    require(index && anchor && out && count, "null argument");
    *out = nullptr;
    *count = 0;
    const Scope sc = scope ? parse_scope(scope) : Scope::same_dataset;
    const auto found = nearest(index->index, anchor, sc, k);
    auto* rows = new chartvec_neighbor[found.size() + 1];
    for (std::size_t i = 0; i < found.size(); ++i) {
      const auto pos = index->index.find(found[i].chart_id);
      rows[i] = {index->index.entries()[*pos].chart_id.c_str(), found[i].distance};
    }
    *out = rows;
    *count = found.size();
  });
}

void chartvec_neighbors_free(chartvec_neighbor* neighbors) { delete[] neighbors; }

chartvec_status chartvec_evaluate(const chartvec_index* index, size_t gap2, size_t gap3,
                                  chartvec_metrics* out) {
  return guarded([&] {
    require(index && out, "null argument");
    *out = to_c(compute_metrics(index->index, gap2, gap3));
  });
}

chartvec_status chartvec_random_baseline(const chartvec_index* index, size_t gap2, size_t gap3,
                                         chartvec_metrics* out) {
  return guarded([&] {
    require(index && out, "null argument");
    *out = to_c(random_baseline(index->index, gap2, gap3));
  });
}

chartvec_status chartvec_evaluate_report(const chartvec_index* index, size_t gap2, size_t gap3,
                                         int details, char** json, char** table) {
  return guarded([&] {
    require(index, "null argument");
    const MetricsReport r = compute_metrics(index->index, gap2, gap3);
    set_string(json, metrics_json(r, details != 0));
    set_string(table, metrics_table(r));
  });
}

void chartvec_ablation_options_init(chartvec_ablation_options* options) {
  if (!options) return;
  const AblationOptions a;
  options->test_fraction = a.test_fraction;
  options->split_seed = a.split_seed;
  options->gap2 = a.gap2;
  options->gap3 = a.gap3;
}

const char* chartvec_variant_names(void) {
  static const std::string names = [] {
    std::string s;
    for (const Variant v : all_variants()) {
      if (!s.empty()) s += ' ';
      s += to_string(v);
    }
    return s;
  }();
  return names.c_str();
}

chartvec_status chartvec_ablate(const chartvec_corpus* corpus, const chartvec_vectors* vectors,
                                const chartvec_train_options* options,
                                const chartvec_ablation_options* ablation,
                                const char* const* variants, size_t n_variants,
                                chartvec_variant_fn on_variant, void* user, char** csv,
                                char** table, size_t* failed) {
  return guarded([&] {
    require(corpus && vectors, "null argument");
    require(!options || !options->variant, "ablation options must not fix a variant");
    std::vector<Variant> list;
    if (variants) {
      for (std::size_t i = 0; i < n_variants; ++i) {
        require(variants[i], "null variant name");
        list.push_back(parse_variant(variants[i]));
      }
    } else {
      list = all_variants();
    }
    const ModelSettings s = settings_from(options);
    AblationOptions opts;
    if (ablation) {
      opts.test_fraction = ablation->test_fraction;
      opts.split_seed = ablation->split_seed;
      opts.gap2 = ablation->gap2;
      opts.gap3 = ablation->gap3;
    }
    VariantCallback cb;
    if (on_variant) {
      cb = [&](const AblationRow& r) {
        const chartvec_ablation_row row{to_string(r.variant).data(), r.ok,
                                        r.metrics.top2,             r.metrics.top3,
                                        r.metrics.cooccurrence,     r.wall_ms,
                                        r.peak_bytes};
        on_variant(&row, user);
      };
    }
    const auto rows = run_ablation(corpus->corpus, vectors->store, s.config, s.hyper, list, opts, cb);
    std::size_t n_failed = 0;
    for (const auto& r : rows) n_failed += !r.ok;
    if (failed) *failed = n_failed;
    set_string(csv, ablation_csv(rows));
    set_string(table, ablation_table(rows));
  });
}

void chartvec_gradcheck_options_init(chartvec_gradcheck_options* options) {
  if (!options) return;
  const GradCheckOptions g;
  options->seed = g.seed;
  options->epsilon = g.epsilon;
  options->coords_per_tensor = g.coords_per_tensor;
  options->samples = g.samples;
  options->inject_fault = g.inject_fault;
  options->zero_floor = g.zero_floor;
}

chartvec_status chartvec_gradcheck(const chartvec_gradcheck_options* options,
                                   chartvec_gradcheck_result* out) {
  return guarded([&] {
    require(out, "null argument");
    GradCheckOptions g;
    if (options) {
      g.seed = options->seed;
      g.epsilon = options->epsilon;
      g.coords_per_tensor = options->coords_per_tensor;
      g.samples = options->samples;
      g.inject_fault = options->inject_fault != 0;
      g.zero_floor = options->zero_floor;
    }
    require(g.epsilon > 0.0, "epsilon must be positive");
    require(g.coords_per_tensor > 0 && g.samples > 0, "empty gradient check");
    const GradCheckResult r = grad_check_random(g);
    *out = {r.max_relative_error, r.checked, r.near_zero, r.skipped};
  });
}

}  // extern "C"
