// chartvec command-line tool. Talks to the library only through chartvec.h.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chartvec/chartvec.h"
#include "json.hpp"

namespace {

using json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Thrown to leave a command with a specific exit code.
struct Exit {
  int code;
};

int exit_code_for(chartvec_status s) {
  switch (s) {
    case CHARTVEC_OK: return kExitOk;
    case CHARTVEC_ERR_IO:
    case CHARTVEC_ERR_INVALID_ARGUMENT: return kExitUsage;
    default: return kExitFailure;
  }
}

void check(chartvec_status s, const std::string& what) {
  if (s == CHARTVEC_OK) return;
  std::cerr << "chartvec: " << what << ": " << chartvec_status_name(s) << ": "
            << chartvec_last_error() << "\n";
  throw Exit{exit_code_for(s)};
}

[[noreturn]] void usage_error(const std::string& msg) {
  std::cerr << "chartvec: " << msg << "\n";
  throw Exit{kExitUsage};
}

struct StringDeleter {
  void operator()(char* s) const { chartvec_free_string(s); }
};
using CString = std::unique_ptr<char, StringDeleter>;

struct CorpusDeleter {
  void operator()(chartvec_corpus* p) const { chartvec_corpus_free(p); }
};
struct VectorsDeleter {
  void operator()(chartvec_vectors* p) const { chartvec_vectors_free(p); }
};
struct ModelDeleter {
  void operator()(chartvec_model* p) const { chartvec_model_free(p); }
};
struct IndexDeleter {
  void operator()(chartvec_index* p) const { chartvec_index_free(p); }
};
using Corpus = std::unique_ptr<chartvec_corpus, CorpusDeleter>;
using Vectors = std::unique_ptr<chartvec_vectors, VectorsDeleter>;
using Model = std::unique_ptr<chartvec_model, ModelDeleter>;
using Index = std::unique_ptr<chartvec_index, IndexDeleter>;

std::string sha256_of(const std::string& path) {
  char hex[65] = {};
  check(chartvec_file_sha256(path.c_str(), hex), "digest " + path);
  return hex;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) usage_error("cannot write " + path);
  out << text;
  if (!out) usage_error("write error on " + path);
}

Corpus load_corpus(const std::string& path, bool lenient = false) {
  chartvec_corpus* raw = nullptr;
  char* report = nullptr;
  const chartvec_status s = chartvec_corpus_load(path.c_str(), lenient, &raw, &report);
  CString owned(report);
  if (report) {
    std::istringstream lines(report);
    for (std::string line; std::getline(lines, line);) {
      std::cerr << (s == CHARTVEC_OK ? "warning: " : "violation: ") << line << "\n";
    }
  }
  check(s, "load corpus " + path);
  return Corpus(raw);
}

Vectors load_vectors(std::string path) {
  if (path.empty()) {
    if (const char* env = std::getenv("CHARTVEC_VECTORS")) path = env;
  }
  if (path.empty()) usage_error("no word vectors: pass --vectors PATH (or none), or set CHARTVEC_VECTORS");
  chartvec_vectors* raw = nullptr;
  if (path == "none") {
    check(chartvec_vectors_empty(&raw), "vectors");
  } else {
    check(chartvec_vectors_load(path.c_str(), &raw), "load vectors " + path);
  }
  return Vectors(raw);
}

// Hyperparameters shared by train and ablate. Values may come from a JSON
// config file; explicit flags win.
struct TrainFlags {
  chartvec_train_options opts{};
  std::string negative_policy = "same-dataset-first";
  std::string variant;
  double test_fraction = 0.1;
  std::uint64_t split_seed = 0;
  bool split_seed_set = false;
  std::string config_path;

  std::vector<std::pair<std::string, CLI::Option*>> options;

  TrainFlags() { chartvec_train_options_init(&opts); }

  void add_to(CLI::App* app, bool with_variant) {
    auto add = [&](const std::string& key, CLI::Option* o) { options.emplace_back(key, o); };
    add("alpha", app->add_option("--alpha", opts.alpha, "pair-distance weight in l1")
                     ->capture_default_str());
    add("beta", app->add_option("--beta", opts.beta, "triplet loss weight")->capture_default_str());
    add("margin",
        app->add_option("--margin", opts.margin, "triplet margin m")->capture_default_str());
    add("lr", app->add_option("--lr", opts.learning_rate, "Adam learning rate")
                  ->capture_default_str());
    add("batch", app->add_option("--batch", opts.batch_size, "batch size")->capture_default_str());
    add("epochs", app->add_option("--epochs", opts.epochs, "training epochs")->capture_default_str());
    add("seed", app->add_option("--seed", opts.seed, "seed for init, sampling, shuffle and dropout")
                    ->capture_default_str());
    add("dropout", app->add_option("--dropout", opts.dropout, "dropout rate after fc1")
                       ->capture_default_str());
    add("negatives", app->add_option("--negatives", opts.negatives_per_window,
                                     "negatives drawn per window")
                         ->capture_default_str());
    add("negative-policy",
        app->add_option("--negative-policy", negative_policy, "same-dataset-first or any")
            ->check(CLI::IsMember({"same-dataset-first", "any"}))
            ->capture_default_str());
    add("test-fraction",
        app->add_option("--test-fraction", test_fraction,
                        "fraction of datasets held out; 0 keeps everything for training")
            ->check(CLI::Range(0.0, 0.99))
            ->capture_default_str());
    add("split-seed",
        app->add_option("--split-seed", split_seed, "split seed (defaults to --seed)"));
    if (with_variant) {
      add("variant", app->add_option("--variant", variant, "train an ablation variant"));
    }
    app->add_option("--config", config_path, "JSON file mirroring these flags");
  }

  // Fills every option not given on the command line from the config file.
  void apply_config() {
    if (config_path.empty()) return finish();
    std::ifstream in(config_path);
    if (!in) usage_error("cannot open config " + config_path);
    nlohmann::json cfg;
    try {
      in >> cfg;
    } catch (const std::exception& e) {
      usage_error("config " + config_path + ": " + e.what());
    }
    if (!cfg.is_object()) usage_error("config " + config_path + ": expected an object");
    for (const auto& item : cfg.items()) {
      auto it = std::find_if(options.begin(), options.end(),
                             [&](const auto& p) { return p.first == item.key(); });
      if (it == options.end()) usage_error("config " + config_path + ": unknown key " + item.key());
      if (it->second->count() > 0) continue;
      const auto& v = item.value();
      const std::string text = v.is_string() ? v.get<std::string>() : v.dump();
      try {
        it->second->add_result(text);
        it->second->run_callback();
      } catch (const CLI::Error& e) {
        usage_error("config " + config_path + ": " + item.key() + ": " + e.what());
      }
    }
    finish();
  }

  void finish() {
    opts.negative_policy = negative_policy.c_str();
    opts.variant = variant.empty() ? nullptr : variant.c_str();
    split_seed_set = std::any_of(options.begin(), options.end(), [](const auto& p) {
      return p.first == "split-seed" && p.second->count() > 0;
    }) || split_seed_set;
    if (!split_seed_set) split_seed = opts.seed;
  }

  json snapshot() const {
    json j;
    j["alpha"] = opts.alpha;
    j["beta"] = opts.beta;
    j["margin"] = opts.margin;
    j["lr"] = opts.learning_rate;
    j["batch"] = opts.batch_size;
    j["epochs"] = opts.epochs;
    j["dropout"] = opts.dropout;
    j["negatives"] = opts.negatives_per_window;
    j["negative-policy"] = negative_policy;
    j["test-fraction"] = test_fraction;
    if (!variant.empty()) j["variant"] = variant;
    return j;
  }
};

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  json seeds = json::object();
  json inputs = json::object();
  json outputs = json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void input(const std::string& path) {
    if (path != "none") inputs[path] = sha256_of(path);
  }
  void output(const std::string& path) { outputs[path] = sha256_of(path); }

  void write(const std::string& path) const {
    json j;
    j["command"] = command;
    j["argv"] = argv;
    j["tool_version"] = chartvec_version();
    j["config"] = config;
    j["seeds"] = seeds;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["wall_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             start)
                       .count();
    write_text(path, j.dump(2) + "\n");
  }
};

std::string manifest_path(const std::string& explicit_path, const std::string& primary_output) {
  return explicit_path.empty() ? primary_output + ".manifest.json" : explicit_path;
}

void print_epoch(const chartvec_epoch* e, void* user) {
  if (*static_cast<bool*>(user)) return;
  std::fprintf(stderr, "epoch %u  l1 %.6f  l2 %.6f  total %.6f  (%.0f ms)\n", e->epoch, e->l1,
               e->l2, e->total, e->wall_ms);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware chart embeddings: train, embed, retrieve and evaluate."};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(chartvec_version()));
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  Manifest manifest;
  for (int i = 0; i < argc; ++i) manifest.argv.emplace_back(argv[i]);
  std::string manifest_flag;

  // validate
  auto* validate = app.add_subcommand("validate", "check a corpus file in strict mode");
  std::string validate_corpus;
  bool validate_lenient = false;
  validate->add_option("corpus", validate_corpus, "corpus JSON")->required();
  validate->add_flag("--lenient", validate_lenient, "drop offending charts instead of failing");

  // grammar dump
  auto* grammar = app.add_subcommand("grammar", "inspect the fact-schema grammar");
  grammar->require_subcommand(1);
  auto* dump = grammar->add_subcommand("dump", "print the rule table");
  std::string dump_out;
  dump->add_option("-o,--out", dump_out, "write to a file instead of stdout");

  // import
  auto* import = app.add_subcommand("import", "convert an external story export to a corpus");
  std::string import_format = "calliope";
  std::string import_in;
  std::string import_out;
  import->add_option("--format", import_format, "input format")
      ->check(CLI::IsMember({"calliope"}))
      ->capture_default_str();
  import->add_option("input", import_in, "export file")->required();
  import->add_option("-o,--out", import_out, "corpus JSON to write")->required();
  import->add_option("--manifest", manifest_flag, "run manifest path (default OUT.manifest.json)");

  // train
  auto* train = app.add_subcommand("train", "split the corpus, build samples and train");
  std::string train_corpus;
  std::string train_vectors;
  std::string train_out;
  std::string train_history;
  std::string train_test_out;
  TrainFlags train_flags;
  train->add_option("corpus", train_corpus, "corpus JSON")->required();
  train->add_option("--vectors", train_vectors,
                    "word vectors (text format), or 'none'; defaults to $CHARTVEC_VECTORS");
  train->add_option("-o,--out", train_out, "checkpoint to write")->required();
  train->add_option("--history", train_history, "per-epoch loss CSV (default OUT.history.csv)");
  train->add_option("--test-out", train_test_out, "write the held-out split as a corpus");
  train->add_option("--manifest", manifest_flag, "run manifest path (default OUT.manifest.json)");
  train_flags.add_to(train, true);

  // embed
  auto* embed = app.add_subcommand("embed", "write the embedding index of a corpus");
  std::string embed_ckpt;
  std::string embed_corpus;
  std::string embed_vectors;
  std::string embed_out;
  embed->add_option("corpus", embed_corpus, "corpus JSON")->required();
  embed->add_option("-c,--checkpoint", embed_ckpt, "trained checkpoint")->required();
  embed->add_option("--vectors", embed_vectors, "word vectors, or 'none'; defaults to $CHARTVEC_VECTORS");
  embed->add_option("-o,--out", embed_out, "index TSV to write")->required();
  embed->add_option("--manifest", manifest_flag, "run manifest path (default OUT.manifest.json)");

  // nearest
  auto* near = app.add_subcommand("nearest", "rank charts by distance to an anchor");
  std::string near_index;
  std::string near_anchor;
  std::size_t near_k = 5;
  std::string near_scope = "same-dataset";
  near->add_option("index", near_index, "index TSV")->required();
  near->add_option("anchor", near_anchor, "anchor chart id")->required();
  near->add_option("-k,--k", near_k, "number of neighbors")->capture_default_str();
  near->add_option("--scope", near_scope, "same-dataset or all")
      ->check(CLI::IsMember({"same-dataset", "all"}))
      ->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "top-2, top-3 and co-occurrence metrics");
  std::string eval_index;
  std::size_t gap2 = 2;
  std::size_t gap3 = 3;
  std::string eval_json;
  bool eval_details = false;
  bool eval_baseline = false;
  eval->add_option("index", eval_index, "index TSV")->required();
  eval->add_option("--gap2", gap2, "largest position gap counted by top-2")->capture_default_str();
  eval->add_option("--gap3", gap3, "largest position gap counted by top-3")->capture_default_str();
  eval->add_option("--json", eval_json, "write the JSON report here");
  eval->add_flag("--details", eval_details, "include per-anchor rows in the JSON report");
  eval->add_flag("--baseline", eval_baseline, "also print the random-retrieval baseline");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "train and evaluate ablation variants");
  std::string ablate_corpus;
  std::string ablate_vectors;
  std::string ablate_variants;
  std::string ablate_out;
  TrainFlags ablate_flags;
  ablate->add_option("corpus", ablate_corpus, "corpus JSON")->required();
  ablate->add_option("--vectors", ablate_vectors, "word vectors, or 'none'; defaults to $CHARTVEC_VECTORS");
  ablate->add_option("--variants", ablate_variants,
                     std::string("comma-separated variants (default: all of ") +
                         chartvec_variant_names() + ")");
  ablate->add_option("-o,--out", ablate_out, "CSV to write (default stdout)");
  ablate->add_option("--gap2", gap2, "largest position gap counted by top-2")->capture_default_str();
  ablate->add_option("--gap3", gap3, "largest position gap counted by top-3")->capture_default_str();
  ablate->add_option("--manifest", manifest_flag, "run manifest path (default OUT.manifest.json)");
  ablate_flags.add_to(ablate, false);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  chartvec_gradcheck_options gc{};
  chartvec_gradcheck_options_init(&gc);
  double gc_tolerance = 1e-4;
  bool gc_fault = false;
  gradcheck->add_option("--seed", gc.seed, "seed for parameters, inputs and probes")
      ->capture_default_str();
  gradcheck->add_option("--epsilon", gc.epsilon, "central-difference step")->capture_default_str();
  gradcheck->add_option("--coords", gc.coords_per_tensor, "coordinates probed per tensor")
      ->capture_default_str();
  gradcheck->add_option("--samples", gc.samples, "quadruples in the probe batch")
      ->capture_default_str();
  gradcheck->add_option("--tolerance", gc_tolerance, "maximum accepted relative error")
      ->capture_default_str();
  gradcheck->add_flag("--inject-fault", gc_fault, "corrupt one analytic gradient (self-test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*validate) {
      load_corpus(validate_corpus, validate_lenient);
      std::cout << "ok: " << validate_corpus << "\n";
      return kExitOk;
    }

    if (*dump) {
      char* text = nullptr;
      check(chartvec_grammar_dump(&text), "grammar dump");
      CString owned(text);
      if (dump_out.empty()) {
        std::cout << text;
      } else {
        write_text(dump_out, text);
      }
      return kExitOk;
    }

    if (*import) {
      manifest.command = "import";
      manifest.config["format"] = import_format;
      manifest.input(import_in);
      check(chartvec_import_calliope(import_in.c_str(), import_out.c_str()), "import");
      manifest.output(import_out);
      manifest.write(manifest_path(manifest_flag, import_out));
      return kExitOk;
    }

    if (*train) {
      train_flags.apply_config();
      manifest.command = "train";
      manifest.config = train_flags.snapshot();
      manifest.seeds["seed"] = train_flags.opts.seed;
      manifest.seeds["split-seed"] = train_flags.split_seed;
      Corpus corpus = load_corpus(train_corpus);
      manifest.input(train_corpus);
      Vectors vectors = load_vectors(train_vectors);
      if (train_vectors.empty() && std::getenv("CHARTVEC_VECTORS")) {
        train_vectors = std::getenv("CHARTVEC_VECTORS");
      }
      manifest.input(train_vectors);
      manifest.config["vectors"] = train_vectors;

      Corpus train_part;
      Corpus test_part;
      const chartvec_corpus* fit = corpus.get();
      if (train_flags.test_fraction > 0.0) {
        chartvec_corpus* a = nullptr;
        chartvec_corpus* b = nullptr;
        check(chartvec_corpus_split(corpus.get(), train_flags.test_fraction,
                                    train_flags.split_seed, &a, &b),
              "split");
        train_part.reset(a);
        test_part.reset(b);
        fit = train_part.get();
        if (!quiet) {
          std::fprintf(stderr, "split: %zu train / %zu test visualizations\n",
                       chartvec_corpus_visualizations(a), chartvec_corpus_visualizations(b));
        }
      }
      chartvec_model* raw = nullptr;
      check(chartvec_train(fit, vectors.get(), &train_flags.opts, print_epoch, &quiet, &raw),
            "train");
      Model model(raw);
      check(chartvec_model_save(model.get(), train_out.c_str()), "save checkpoint");
      manifest.output(train_out);

      char* csv = nullptr;
      check(chartvec_model_history_csv(model.get(), &csv), "history");
      CString owned(csv);
      const std::string history = train_history.empty() ? train_out + ".history.csv" : train_history;
      write_text(history, csv);
      manifest.outputs[history] = sha256_of(history);
      if (!train_test_out.empty()) {
        if (!test_part) usage_error("--test-out needs --test-fraction > 0");
        check(chartvec_corpus_save(test_part.get(), train_test_out.c_str()), "write test split");
        manifest.output(train_test_out);
      }
      chartvec_model_info info{};
      check(chartvec_model_info_get(model.get(), &info), "model info");
      manifest.config["samples"] = info.samples;
      manifest.config["windows"] = info.windows;
      manifest.config["duplicates_removed"] = info.duplicates_removed;
      manifest.config["steps"] = info.steps;
      if (!quiet) {
        std::fprintf(stderr, "trained: %zu samples, %llu steps, %zu parameters\n", info.samples,
                     static_cast<unsigned long long>(info.steps), info.parameters);
      }
      manifest.write(manifest_path(manifest_flag, train_out));
      return kExitOk;
    }

    if (*embed) {
      manifest.command = "embed";
      chartvec_model* raw = nullptr;
      check(chartvec_model_load(embed_ckpt.c_str(), &raw), "load checkpoint " + embed_ckpt);
      Model model(raw);
      manifest.input(embed_ckpt);
      Corpus corpus = load_corpus(embed_corpus);
      manifest.input(embed_corpus);
      Vectors vectors = load_vectors(embed_vectors);
      if (embed_vectors.empty() && std::getenv("CHARTVEC_VECTORS")) {
        embed_vectors = std::getenv("CHARTVEC_VECTORS");
      }
      manifest.input(embed_vectors);
      chartvec_index* idx = nullptr;
      check(chartvec_embed(model.get(), corpus.get(), vectors.get(), &idx), "embed");
      Index index(idx);
      check(chartvec_index_save(index.get(), embed_out.c_str()), "write index");
      manifest.output(embed_out);
      manifest.config["rows"] = chartvec_index_size(index.get());
      manifest.config["dimension"] = chartvec_index_dim(index.get());
      manifest.write(manifest_path(manifest_flag, embed_out));
      return kExitOk;
    }

    if (*near) {
      chartvec_index* idx = nullptr;
      check(chartvec_index_load(near_index.c_str(), &idx), "load index " + near_index);
      Index index(idx);
      chartvec_neighbor* rows = nullptr;
      std::size_t n = 0;
      check(chartvec_nearest(index.get(), near_anchor.c_str(), near_scope.c_str(), near_k, &rows,
                             &n),
            "nearest");
      for (std::size_t i = 0; i < n; ++i) {
        std::printf("%zu\t%s\t%.17g\n", i + 1, rows[i].chart_id, rows[i].distance);
      }
      chartvec_neighbors_free(rows);
      return kExitOk;
    }

    if (*eval) {
      chartvec_index* idx = nullptr;
      check(chartvec_index_load(eval_index.c_str(), &idx), "load index " + eval_index);
      Index index(idx);
      char* js = nullptr;
      char* table = nullptr;
      check(chartvec_evaluate_report(index.get(), gap2, gap3, eval_details, &js, &table), "eval");
      CString owned_json(js);
      CString owned_table(table);
      std::cout << table;
      if (eval_baseline) {
        chartvec_metrics base{};
        check(chartvec_random_baseline(index.get(), gap2, gap3, &base), "baseline");
        std::printf("random baseline: top-%zu %.4f  top-%zu %.4f  co-occurrence %.4f\n", gap2,
                    base.top2, gap3, base.top3, base.cooccurrence);
      }
      if (!eval_json.empty()) write_text(eval_json, js);
      return kExitOk;
    }

    if (*ablate) {
      ablate_flags.apply_config();
      manifest.command = "ablate";
      manifest.config = ablate_flags.snapshot();
      manifest.config["gap2"] = gap2;
      manifest.config["gap3"] = gap3;
      manifest.seeds["seed"] = ablate_flags.opts.seed;
      manifest.seeds["split-seed"] = ablate_flags.split_seed;
      std::vector<std::string> names;
      if (!ablate_variants.empty()) {
        std::stringstream ss(ablate_variants);
        for (std::string v; std::getline(ss, v, ',');) {
          if (!v.empty()) names.push_back(v);
        }
      }
      std::vector<const char*> name_ptrs;
      for (const auto& v : names) name_ptrs.push_back(v.c_str());
      manifest.config["variants"] = names.empty() ? json(chartvec_variant_names()) : json(names);

      Corpus corpus = load_corpus(ablate_corpus);
      manifest.input(ablate_corpus);
      Vectors vectors = load_vectors(ablate_vectors);
      if (ablate_vectors.empty() && std::getenv("CHARTVEC_VECTORS")) {
        ablate_vectors = std::getenv("CHARTVEC_VECTORS");
      }
      manifest.input(ablate_vectors);

      chartvec_ablation_options ab{};
      chartvec_ablation_options_init(&ab);
      ab.test_fraction = ablate_flags.test_fraction;
      ab.split_seed = ablate_flags.split_seed;
      ab.gap2 = gap2;
      ab.gap3 = gap3;
      auto progress = [](const chartvec_ablation_row* r, void* user) {
        if (*static_cast<bool*>(user)) return;
        std::fprintf(stderr, "%-24s %s  co-occurrence %.4f  (%.0f ms)\n", r->variant,
                     r->ok ? "ok    " : "FAILED", r->cooccurrence, r->wall_ms);
      };
      char* csv = nullptr;
      char* table = nullptr;
      std::size_t failed = 0;
      check(chartvec_ablate(corpus.get(), vectors.get(), &ablate_flags.opts, &ab,
                            names.empty() ? nullptr : name_ptrs.data(), name_ptrs.size(), progress,
                            &quiet, &csv, &table, &failed),
            "ablate");
      CString owned_csv(csv);
      CString owned_table(table);
      if (ablate_out.empty()) {
        std::cout << csv;
      } else {
        write_text(ablate_out, csv);
        manifest.output(ablate_out);
        manifest.write(manifest_path(manifest_flag, ablate_out));
      }
      if (!quiet) std::cerr << table;
      return failed == 0 ? kExitOk : kExitFailure;
    }

    if (*gradcheck) {
      gc.inject_fault = gc_fault;
      if (gc.epsilon < 1e-7 || gc.epsilon > 1e-3) {
        std::fprintf(stderr,
                     "warning: epsilon %g is outside [1e-7, 1e-3]; truncation or rounding error "
                     "may dominate the central difference\n",
                     gc.epsilon);
      }
      chartvec_gradcheck_result r{};
      check(chartvec_gradcheck(&gc, &r), "gradcheck");
      const bool pass = r.max_relative_error < gc_tolerance;
      std::printf("max_relative_error %.3e  checked %zu  near_zero %zu  skipped %zu  %s\n",
                  r.max_relative_error, r.checked, r.near_zero, r.skipped, pass ? "PASS" : "FAIL");
      return pass ? kExitOk : kExitFailure;
    }
  } catch (const Exit& e) {
    return e.code;
  }
  return kExitUsage;
}
