// Acceptance run: one PASS/FAIL/SKIP line per criterion, nonzero exit on FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "chartvec/corpus.hpp"
#include "chartvec/encoder.hpp"
#include "chartvec/error.hpp"
#include "chartvec/evaluation.hpp"
#include "chartvec/grammar.hpp"
#include "chartvec/learning.hpp"
#include "chartvec/rng.hpp"
#include "chartvec/semantics.hpp"
#include "support.hpp"

using namespace chartvec;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::pass;
  std::string detail;
};

class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.empty()) failures_ = what;
    if (!ok) ++failed_;
  }
  bool ok() const { return failed_ == 0; }
  std::string first_failure() const { return failures_; }

 private:
  std::size_t failed_ = 0;
  std::string failures_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome finish(const Checker& c, std::string detail) {
  if (c.ok()) return {Status::pass, std::move(detail)};
  return {Status::fail, c.first_failure() + "; " + detail};
}

// AC1
Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckOptions opts;
  const auto r = grad_check_random(opts);
  const double secs = seconds_since(t0);
  Checker c;
  c.expect(r.checked >= 200, fmt("only %zu coordinates", r.checked));
  c.expect(r.max_relative_error < 1e-4, fmt("max relative error %.3e", r.max_relative_error));
  c.expect(secs < 60.0, fmt("took %.1f s", secs));
  return finish(c, fmt("max_rel %.3e over %zu coords (%zu near zero) in %.1f s",
                       r.max_relative_error, r.checked, r.near_zero, secs));
}

// AC2
Outcome loss_identities() {
  Checker c;
  Rng rng(20);
  // Dyadic coordinates keep the midpoint exact in binary floating point.
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(540), b(540), m(540);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = static_cast<double>(static_cast<int>(rng.below(2001)) - 1000) / 64.0;
      b[i] = static_cast<double>(static_cast<int>(rng.below(2001)) - 1000) / 64.0;
      m[i] = (a[i] + b[i]) / 2.0;
    }
    c.expect(interpolation_loss(a, m, b, 0.5).interp_term == 0.0, "interp term not exactly 0");
  }

  std::size_t hinge_zero = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> a(8), p(8), n(8);
    for (auto* v : {&a, &p, &n}) {
      for (auto& x : *v) x = rng.normal() * 3.0;
    }
    const double margin = rng.uniform() * 2.0;
    if (euclidean(a, n) >= euclidean(a, p) + margin) {
      ++hinge_zero;
      c.expect(triplet_loss(a, p, n, margin) == 0.0, "triplet loss nonzero past the margin");
    }
  }
  c.expect(hinge_zero > 50, "too few satisfied triplets drawn");

  for (int t = 0; t < 50; ++t) {
    Eigen::MatrixXd e(16, 20);
    for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
    HyperParams h;
    h.alpha = rng.uniform();
    h.beta = 0.0;
    h.margin = 1.0 + rng.uniform();
    const auto loss = quadruple_loss(e, h);
    c.expect(loss.total == loss.l1, "beta = 0 total differs from l1");
  }
  return finish(c, fmt("%zu hinge-zero triplets checked", hinge_zero));
}

// AC3
Outcome grammar_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker c;
  c.expect(grammar::rules().size() == 60, "rule count is not 60");
  Rng rng(30);
  std::size_t shortest = 99, longest = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto fact = testing::random_fact(rng);
    const auto seq = grammar::derive_rules(fact);
    shortest = std::min(shortest, seq.size());
    longest = std::max(longest, seq.size());
    c.expect(seq.size() >= 8 && seq.size() <= 13, fmt("derivation of length %zu", seq.size()));
    c.expect(grammar::decode_skeleton(seq) == grammar::skeleton_of(fact), "skeleton roundtrip");
    const auto m = grammar::encode_one_hot(seq);
    for (std::size_t r = 0; r < m.rows; ++r) {
      double sum = 0.0;
      bool binary = true;
      for (std::size_t col = 0; col < m.cols; ++col) {
        sum += m.at(r, col);
        binary = binary && (m.at(r, col) == 0.0 || m.at(r, col) == 1.0);
      }
      c.expect(binary && (sum == 0.0 || sum == 1.0), "schema row is not one-hot or zero");
      c.expect((sum == 1.0) == (r < seq.size()), "nonzero rows do not match the sequence");
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, fmt("took %.1f s", secs));
  return finish(c, fmt("1000 facts, lengths %zu..%zu, %.2f s", shortest, longest, secs));
}

// AC4
Outcome semantics_properties() {
  Checker c;
  std::vector<std::string> words;
  for (const char* field :
       {"Country name", "City name", "Year", "Student population", "Year", "2018"}) {
    for (auto& w : segment_words(field)) words.push_back(w);
  }
  c.expect(words == std::vector<std::string>{"Country", "name", "City", "name", "Year", "Student",
                                             "population", "Year", "2018"},
           "token split differs");

  WordVector ramp{};
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
  const auto pooled = pool_word(ramp);
  for (std::size_t j = 0; j < pooled.size(); ++j) {
    c.expect(pooled[j] == 10.0 * static_cast<double>(j) + 4.5, "ramp pooling");
  }

  Rng rng(40);
  for (int t = 0; t < 200; ++t) {
    WordVector u{}, v{}, w{};
    const double a = rng.normal(), b = rng.normal();
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = rng.normal();
      v[i] = rng.normal();
      w[i] = a * u[i] + b * v[i];
    }
    const auto pu = pool_word(u), pv = pool_word(v), pw = pool_word(w);
    for (std::size_t j = 0; j < pw.size(); ++j) {
      c.expect(std::abs(pw[j] - (a * pu[j] + b * pv[j])) <= 1e-12, "pooling is not linear");
    }
  }
  return finish(c, "token split, ramp pooling and 200 linearity pairs");
}

struct Oracle {
  double top2 = 0.0, top3 = 0.0, co = 0.0;
  std::size_t scored = 0, excluded = 0;
};

Oracle brute_force(const EmbeddingIndex& index) {
  const auto all = index.entries();
  Oracle o;
  std::size_t h2 = 0, h3 = 0, hc = 0;
  for (const auto& a : all) {
    const IndexEntry* best = nullptr;
    double best_d = 0.0;
    for (const auto& cand : all) {
      if (&cand == &a || cand.dataset_id != a.dataset_id) continue;
      double d = 0.0;
      for (std::size_t i = 0; i < a.vector.size(); ++i) {
        d += (a.vector[i] - cand.vector[i]) * (a.vector[i] - cand.vector[i]);
      }
      d = std::sqrt(d);
      if (!best || d < best_d || (d == best_d && cand.chart_id < best->chart_id)) {
        best = &cand;
        best_d = d;
      }
    }
    if (!best) {
      ++o.excluded;
      continue;
    }
    ++o.scored;
    if (best->story_id != a.story_id) continue;
    ++hc;
    const std::size_t gap =
        best->position > a.position ? best->position - a.position : a.position - best->position;
    h2 += gap <= 2;
    h3 += gap <= 3;
  }
  if (o.scored) {
    const auto n = static_cast<double>(o.scored);
    o.top2 = static_cast<double>(h2) / n;
    o.top3 = static_cast<double>(h3) / n;
    o.co = static_cast<double>(hc) / n;
  }
  return o;
}

bool matches(const EmbeddingIndex& index) {
  const auto m = compute_metrics(index);
  const auto o = brute_force(index);
  return m.top2 == o.top2 && m.top3 == o.top3 && m.cooccurrence == o.co &&
         m.n_anchors == o.scored && m.excluded == o.excluded;
}

// AC5
Outcome metric_oracle() {
  Checker c;
  const auto corpus = load_corpus(testing::fixture_corpus());
  Rng rng(50);
  std::size_t indices = 0;
  for (int t = 0; t < 30; ++t) {
    // Small integer grids force distance ties.
    const std::size_t dim = 1 + rng.below(4);
    const bool grid = t % 2 == 0;
    std::vector<IndexEntry> entries;
    for (const auto& v : corpus.visualizations) {
      for (std::size_t p = 0; p < v.charts.size(); ++p) {
        std::vector<double> vec(dim);
        for (auto& x : vec) x = grid ? static_cast<double>(rng.below(3)) : rng.normal();
        entries.push_back({v.charts[p].id, v.id, p, v.dataset_id, vec});
      }
    }
    c.expect(matches(EmbeddingIndex(std::move(entries))), fmt("random index %d disagrees", t));
    ++indices;
  }

  const auto store = VectorStore::load(testing::fixture_vectors());
  const EncoderConfig cfg;
  HyperParams h;
  h.epochs = 20;
  const auto run = train_on_corpus(corpus, store, cfg, h);
  c.expect(matches(build_index(corpus, store, init_params(3, cfg), cfg)), "untrained index");
  c.expect(matches(build_index(corpus, store, run.result.params, cfg)), "trained index");
  indices += 2;
  return finish(c, fmt("%zu fixture indices agree exactly", indices));
}

// AC6
Outcome learning_signal() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto corpus = load_corpus(testing::fixture_corpus());
  const auto store = VectorStore::load(testing::fixture_vectors());
  const EncoderConfig cfg;
  HyperParams h;
  h.epochs = 200;
  const auto run = train_on_corpus(corpus, store, cfg, h);
  const auto index = build_index(corpus, store, run.result.params, cfg);
  const auto m = compute_metrics(index);
  const auto base = random_baseline(index);
  const double secs = seconds_since(t0);
  Checker c;
  c.expect(m.cooccurrence >= 0.8, fmt("co-occurrence %.3f", m.cooccurrence));
  c.expect(m.top3 >= 2.0 * base.top3, fmt("top3 %.3f vs baseline %.3f", m.top3, base.top3));
  c.expect(secs < 300.0, fmt("took %.1f s", secs));
  return finish(c, fmt("co %.3f top3 %.3f (baseline top3 %.3f) loss %.2f in %.1f s",
                       m.cooccurrence, m.top3, base.top3,
                       run.result.history.back().loss.total, secs));
}

// AC7
Outcome ablation_direction() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto corpus = load_corpus(testing::fixture_corpus());
  const auto store = VectorStore::load(testing::fixture_vectors());
  HyperParams h;
  h.epochs = 200;
  const auto variants = all_variants();
  const auto rows = run_ablation(corpus, store, EncoderConfig{}, h, variants, AblationOptions{});
  const double secs = seconds_since(t0);
  Checker c;
  const auto full = std::find_if(rows.begin(), rows.end(),
                                 [](const AblationRow& r) { return r.variant == Variant::full; });
  c.expect(full != rows.end() && full->ok, "full model did not train");
  if (!c.ok()) return finish(c, "");
  std::size_t wins = 0, comparisons = 0;
  std::string losses;
  for (const auto& r : rows) {
    if (r.variant == Variant::full) continue;
    c.expect(r.ok, std::string(to_string(r.variant)) + " failed: " + r.error);
    ++comparisons;
    if (full->metrics.cooccurrence >= r.metrics.cooccurrence) {
      ++wins;
    } else {
      losses += " " + std::string(to_string(r.variant));
    }
  }
  // 7 of 9 scaled to the 10 single-switch variants.
  const std::size_t required = (7 * comparisons + 8) / 9;
  c.expect(wins >= required, fmt("full wins %zu of %zu, needs %zu", wins, comparisons, required));
  c.expect(secs < 45.0 * 60.0, fmt("took %.1f s", secs));
  return finish(c, fmt("full co %.3f >= variant in %zu of %zu (need %zu)%s%s in %.1f s",
                       full->metrics.cooccurrence, wins, comparisons, required,
                       losses.empty() ? "" : "; behind:", losses.c_str(), secs));
}

// AC8
Outcome reproducibility() {
  Checker c;
  const auto dir = testing::scratch("acceptance_repro");
  const std::string cli = CHARTVEC_CLI;
  const auto run = [&](const std::string& name) {
    const std::string cmd = "\"" + cli + "\" -q train \"" + testing::fixture_corpus().string() +
                            "\" --vectors \"" + testing::fixture_vectors().string() +
                            "\" --epochs 5 --seed 9 -o \"" + (dir / name).string() +
                            "\" --manifest \"" + (dir / (name + ".manifest.json")).string() + "\"";
    return std::system(cmd.c_str());
  };
  c.expect(run("a.bin") == 0 && run("b.bin") == 0, "cli train failed");
  const auto a = read_bytes(dir / "a.bin");
  const auto b = read_bytes(dir / "b.bin");
  c.expect(!a.empty() && a == b, "checkpoints differ");

  const auto ck = load_checkpoint(dir / "a.bin");
  save_checkpoint(dir / "c.bin", ck.params, ck.config, ck.hyper);
  c.expect(read_bytes(dir / "c.bin") == a, "save/load roundtrip changed bytes");
  const auto again = load_checkpoint(dir / "c.bin");
  c.expect(again.params == ck.params && again.config == ck.config && again.hyper == ck.hyper,
           "reloaded checkpoint differs");
  return finish(c, fmt("two CLI runs give identical %zu-byte checkpoints; roundtrip exact",
                       a.size()));
}

// AC9
Outcome full_scale() {
  const char* corpus_path = std::getenv("CHARTVEC_FULL_CORPUS");
  if (!corpus_path || !*corpus_path) return {Status::skip, "CHARTVEC_FULL_CORPUS not set"};
  const char* vectors_path = std::getenv("CHARTVEC_VECTORS");
  const auto t0 = std::chrono::steady_clock::now();
  const auto corpus = load_corpus(corpus_path);
  const auto store = vectors_path && *vectors_path ? VectorStore::load(vectors_path)
                                                   : VectorStore::empty();
  const double test_fraction =
      104.0 / static_cast<double>(corpus.visualizations.size());
  const auto [train_set, test_set] = split_corpus(corpus, test_fraction, 0);
  const EncoderConfig cfg;
  const HyperParams h;
  const auto run = train_on_corpus(train_set, store, cfg, h);
  const auto m = compute_metrics(build_index(test_set, store, run.result.params, cfg));
  const double secs = seconds_since(t0);
  Checker c;
  const auto n = static_cast<double>(run.samples);
  c.expect(std::abs(n - 42222.0) <= 0.05 * 42222.0, fmt("%zu samples", run.samples));
  c.expect(std::abs(static_cast<double>(run.result.steps) - 3298.0) <= 0.05 * 3298.0,
           fmt("%llu steps", static_cast<unsigned long long>(run.result.steps)));
  c.expect(std::abs(m.top2 - 0.63) <= 0.10, fmt("top2 %.3f", m.top2));
  c.expect(std::abs(m.top3 - 0.73) <= 0.10, fmt("top3 %.3f", m.top3));
  c.expect(std::abs(m.cooccurrence - 0.81) <= 0.10, fmt("co %.3f", m.cooccurrence));
  c.expect(secs <= 3600.0, fmt("took %.1f s", secs));
  return finish(c, fmt("%zu samples, %llu steps, top2 %.3f top3 %.3f co %.3f in %.0f s",
                       run.samples, static_cast<unsigned long long>(run.result.steps), m.top2,
                       m.top3, m.cooccurrence, secs));
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"AC1", gradient_fidelity},  {"AC2", loss_identities},    {"AC3", grammar_properties},
      {"AC4", semantics_properties}, {"AC5", metric_oracle},    {"AC6", learning_signal},
      {"AC7", ablation_direction}, {"AC8", reproducibility},    {"AC9", full_scale},
  };
  const std::string only = argc > 1 ? argv[1] : "";
  bool failed = false;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && only != name) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {Status::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
    std::printf("%s %s %s\n", name, tag, o.detail.c_str());
    std::fflush(stdout);
    failed = failed || o.status == Status::fail;
  }
  return failed ? 1 : 0;
}
