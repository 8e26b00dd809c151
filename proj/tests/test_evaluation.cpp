#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "chartvec/error.hpp"
#include "chartvec/evaluation.hpp"
#include "support.hpp"

using namespace chartvec;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{0};
}

double l2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct Oracle {
  double top2 = 0.0, top3 = 0.0, co = 0.0;
  std::size_t scored = 0, excluded = 0;
};

// Sort every same-dataset candidate by (distance, id) and score the first.
Oracle brute_force(const EmbeddingIndex& index, std::size_t gap2, std::size_t gap3) {
  const auto all = index.entries();
  Oracle o;
  std::size_t h2 = 0, h3 = 0, hc = 0;
  for (const auto& a : all) {
    std::vector<std::pair<double, const IndexEntry*>> ranked;
    for (const auto& c : all) {
      if (&c != &a && c.dataset_id == a.dataset_id) ranked.emplace_back(l2(a.vector, c.vector), &c);
    }
    if (ranked.empty()) {
      ++o.excluded;
      continue;
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first < y.first : x.second->chart_id < y.second->chart_id;
    });
    const auto* r = ranked.front().second;
    ++o.scored;
    if (r->story_id != a.story_id) continue;
    ++hc;
    const long gap = std::labs(static_cast<long>(r->position) - static_cast<long>(a.position));
    h2 += gap <= static_cast<long>(gap2);
    h3 += gap <= static_cast<long>(gap3);
  }
  if (o.scored) {
    o.top2 = static_cast<double>(h2) / static_cast<double>(o.scored);
    o.top3 = static_cast<double>(h3) / static_cast<double>(o.scored);
    o.co = static_cast<double>(hc) / static_cast<double>(o.scored);
  }
  return o;
}

void check_against_oracle(const EmbeddingIndex& index, std::size_t gap2, std::size_t gap3) {
  const auto m = compute_metrics(index, gap2, gap3);
  const auto o = brute_force(index, gap2, gap3);
  CHECK(m.top2 == o.top2);
  CHECK(m.top3 == o.top3);
  CHECK(m.cooccurrence == o.co);
  CHECK(m.n_anchors == o.scored);
  CHECK(m.excluded == o.excluded);
  CHECK(0.0 <= m.top2);
  CHECK(m.top2 <= m.top3);
  CHECK(m.top3 <= m.cooccurrence);
  CHECK(m.cooccurrence <= 1.0);
}

EmbeddingIndex random_fixture_index(std::uint64_t seed, std::size_t dim) {
  const auto corpus = load_corpus(testing::fixture_corpus());
  Rng rng(seed);
  std::vector<IndexEntry> entries;
  for (const auto& v : corpus.visualizations) {
    for (std::size_t p = 0; p < v.charts.size(); ++p) {
      std::vector<double> vec(dim);
      for (auto& x : vec) x = rng.normal();
      entries.push_back({v.charts[p].id, v.id, p, v.dataset_id, vec});
    }
  }
  return EmbeddingIndex(std::move(entries));
}

}  // namespace

TEST_SUITE("retrieval") {
  TEST_CASE("toy ranking matches a brute-force sort") {
    const auto index = testing::toy_index(
        {{"a", "s", 0, "d"}, {"b", "s", 1, "d"}, {"c", "s", 2, "d"}, {"e", "t", 0, "d"},
         {"f", "u", 0, "x"}},
        {{0, 0}, {3, 4}, {1, 0}, {0, -2}, {0.5, 0}});
    const auto got = nearest(index, "a", Scope::all, 10);
    REQUIRE(got.size() == 4);
    CHECK(got[0] == Neighbor{"f", 0.5});
    CHECK(got[1] == Neighbor{"c", 1.0});
    CHECK(got[2] == Neighbor{"e", 2.0});
    CHECK(got[3] == Neighbor{"b", 5.0});

    const auto same = nearest(index, "a", Scope::same_dataset, 10);
    REQUIRE(same.size() == 3);
    for (const auto& n : same) CHECK(n.chart_id != "f");
  }

  TEST_CASE("random indices: ordering, scope and k") {
    const auto index = random_fixture_index(3, 4);
    for (const auto& anchor : index.entries()) {
      const auto got = nearest(index, anchor.chart_id, Scope::same_dataset, 100);
      std::size_t peers = 0;
      for (const auto& e : index.entries()) {
        peers += e.dataset_id == anchor.dataset_id && e.chart_id != anchor.chart_id;
      }
      CHECK(got.size() == peers);
      for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i - 1].distance <= got[i].distance);
      for (const auto& n : got) {
        CHECK(index.entries()[*index.find(n.chart_id)].dataset_id == anchor.dataset_id);
        CHECK(n.chart_id != anchor.chart_id);
      }
      CHECK(nearest(index, anchor.chart_id, Scope::all, 3).size() == 3);
    }
  }

  TEST_CASE("equal distances fall back to chart id order") {
    const auto index = testing::toy_index(
        {{"m", "s", 0, "d"}, {"z", "s", 1, "d"}, {"b", "t", 0, "d"}, {"k", "t", 1, "d"}},
        {{0, 0}, {1, 0}, {0, 1}, {-1, 0}});
    const auto got = nearest(index, "m", Scope::same_dataset, 3);
    CHECK(got[0].chart_id == "b");
    CHECK(got[1].chart_id == "k");
    CHECK(got[2].chart_id == "z");
  }

  TEST_CASE("single same-dataset peer is returned at k = 1") {
    const auto index = testing::toy_index({{"a", "s", 0, "d"}, {"b", "s", 1, "d"}, {"c", "t", 0, "e"}},
                                          {{0}, {7}, {0.1}});
    const auto got = nearest(index, "a", Scope::same_dataset, 1);
    REQUIRE(got.size() == 1);
    CHECK(got[0].chart_id == "b");
  }

  TEST_CASE("unknown anchors and empty scopes") {
    const auto index = testing::toy_index({{"a", "s", 0, "d"}, {"b", "s", 1, "e"}}, {{0}, {1}});
    CHECK(code_of([&] { nearest(index, "zz", Scope::all, 1); }) == ErrorCode::not_found);
    CHECK(code_of([&] { nearest(index, "a", Scope::same_dataset, 1); }) == ErrorCode::domain);
    CHECK(parse_scope("same-dataset") == Scope::same_dataset);
    CHECK_THROWS_AS(parse_scope("nearby"), Error);
  }

  TEST_CASE("index construction checks ids and dimensions") {
    CHECK(code_of([] { testing::toy_index({{"a", "s", 0, "d"}, {"a", "s", 1, "d"}}, {{0}, {1}}); }) ==
          ErrorCode::validation);
    CHECK(code_of([] { testing::toy_index({{"a", "s", 0, "d"}, {"b", "s", 1, "d"}}, {{0}, {1, 2}}); }) ==
          ErrorCode::shape);
  }

  TEST_CASE("TSV roundtrip is lossless") {
    const auto index = random_fixture_index(9, 6);
    const auto text = index_tsv(index);
    CHECK(text.rfind("chart_id\tstory_id\tposition\tdataset_id\tv1\t", 0) == 0);
    CHECK(parse_index(text) == index);
    const auto dir = testing::scratch("index_tsv");
    save_index(dir / "i.tsv", index);
    CHECK(load_index(dir / "i.tsv") == index);
    CHECK(parse_index(index_tsv(EmbeddingIndex{})).empty());
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("hand-built two-story dataset with planted vectors") {
    // Story s: 0..3 along the x axis; story t sits near s's last chart.
    const auto index = testing::toy_index(
        {{"s0", "s", 0, "d"}, {"s1", "s", 1, "d"}, {"s2", "s", 2, "d"}, {"s3", "s", 3, "d"},
         {"t0", "t", 0, "d"}, {"t1", "t", 1, "d"}, {"t2", "t", 2, "d"}},
        {{0}, {10}, {30}, {60}, {61.5}, {100}, {140}});
    const auto m = compute_metrics(index, 2, 3);
    // s0->s1 (gap 1), s1->s0, s2->s1, s3->t0 (miss), t0->s3 (miss), t1->t0, t2->t1.
    CHECK(m.n_anchors == 7);
    CHECK(m.cooccurrence == 5.0 / 7.0);
    CHECK(m.top2 == 5.0 / 7.0);
    check_against_oracle(index, 2, 3);
    check_against_oracle(index, 0, 0);
    const auto strict = compute_metrics(index, 0, 1);
    CHECK(strict.top2 == 0.0);
    CHECK(strict.top3 == 5.0 / 7.0);
  }

  TEST_CASE("oracle equivalence on fixture-shaped indices") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto index = random_fixture_index(seed, 1 + seed % 5);
      check_against_oracle(index, 2, 3);
      check_against_oracle(index, 1, 4);
    }
  }

  TEST_CASE("every dataset with a single story gives co-occurrence 1") {
    const auto index = testing::toy_index(
        {{"a0", "a", 0, "x"}, {"a1", "a", 1, "x"}, {"a2", "a", 2, "x"}, {"b0", "b", 0, "y"},
         {"b1", "b", 1, "y"}, {"b2", "b", 2, "y"}},
        {{0, 9}, {4, 1}, {7, 7}, {1, 1}, {2, 8}, {5, 5}});
    CHECK(compute_metrics(index).cooccurrence == 1.0);
    CHECK(random_baseline(index).cooccurrence == 1.0);
  }

  TEST_CASE("anchors without same-dataset peers are excluded") {
    const auto index = testing::toy_index({{"a", "s", 0, "d"}, {"b", "s", 1, "d"}, {"c", "t", 0, "e"}},
                                          {{0}, {1}, {2}});
    const auto m = compute_metrics(index);
    CHECK(m.excluded == 1);
    CHECK(m.n_anchors == 2);
    CHECK(m.cooccurrence == 1.0);
  }

  TEST_CASE("empty index is a domain error") {
    CHECK(code_of([] { compute_metrics(EmbeddingIndex{}); }) == ErrorCode::domain);
    CHECK(code_of([] { random_baseline(EmbeddingIndex{}); }) == ErrorCode::domain);
  }

  TEST_CASE("random baseline matches enumeration over candidates") {
    const auto index = random_fixture_index(1, 2);
    const auto base = random_baseline(index, 2, 3);
    double s2 = 0.0, s3 = 0.0, sc = 0.0;
    for (const auto& a : index.entries()) {
      double n = 0.0, c2 = 0.0, c3 = 0.0, cc = 0.0;
      for (const auto& c : index.entries()) {
        if (c.chart_id == a.chart_id || c.dataset_id != a.dataset_id) continue;
        n += 1.0;
        if (c.story_id != a.story_id) continue;
        const auto gap = std::labs(static_cast<long>(c.position) - static_cast<long>(a.position));
        cc += 1.0;
        c2 += gap <= 2;
        c3 += gap <= 3;
      }
      s2 += c2 / n;
      s3 += c3 / n;
      sc += cc / n;
    }
    const double anchors = static_cast<double>(index.size());
    CHECK(base.top2 == doctest::Approx(s2 / anchors).epsilon(1e-14));
    CHECK(base.top3 == doctest::Approx(s3 / anchors).epsilon(1e-14));
    CHECK(base.cooccurrence == doctest::Approx(sc / anchors).epsilon(1e-14));
  }

  TEST_CASE("reports") {
    const auto index = random_fixture_index(2, 3);
    const auto m = compute_metrics(index);
    const auto json = metrics_json(m, true);
    CHECK(json.find("\"top2\"") != std::string::npos);
    CHECK(json.find("\"details\"") != std::string::npos);
    CHECK(metrics_json(m).find("\"details\"") == std::string::npos);
    CHECK(metrics_table(m).find("co-occurrence") != std::string::npos);
  }
}

TEST_SUITE("index") {
  TEST_CASE("build_index embeds every chart in corpus order") {
    const auto corpus = load_corpus(testing::fixture_corpus());
    const auto store = VectorStore::load(testing::fixture_vectors());
    const EncoderConfig cfg;
    const auto params = init_params(1, cfg);
    const auto index = build_index(corpus, store, params, cfg);
    REQUIRE(index.size() == 50);
    CHECK(index.dimension() == 540);
    CHECK(index.entries()[0].chart_id == "housing-rural-c0");
    CHECK(index.entries()[0].story_id == "housing-rural");
    CHECK(index.entries()[4].position == 4);
    CHECK(build_index(corpus, store, params, cfg) == index);
    CHECK(build_index(Corpus{}, store, params, cfg).empty());

    const auto one = encode_chart(corpus.visualizations[0].charts[2].fact, store, cfg);
    const auto v = forward(one, params, cfg);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      CHECK(index.entries()[2].vector[static_cast<std::size_t>(i)] ==
            doctest::Approx(v(i)).epsilon(1e-12));
    }
  }
}

TEST_SUITE("ablation") {
  TEST_CASE("variant names roundtrip") {
    CHECK(all_variants().size() == kVariantCount);
    for (auto v : all_variants()) CHECK(parse_variant(to_string(v)) == v);
    CHECK(code_of([] { parse_variant("no-such-variant"); }) == ErrorCode::invalid_argument);
  }

  TEST_CASE("switch sets") {
    const EncoderConfig base;
    const HyperParams hyper;
    CHECK(make_ablation(Variant::full, base, hyper).config == base);
    CHECK(make_ablation(Variant::full, base, hyper).hyper == hyper);
    CHECK_FALSE(make_ablation(Variant::no_linear_interpolation, base, hyper).hyper.use_interpolation);
    CHECK_FALSE(make_ablation(Variant::no_classification, base, hyper).hyper.use_triplet);
    CHECK_FALSE(make_ablation(Variant::no_fact_schema, base, hyper).config.use_schema);
    CHECK_FALSE(make_ablation(Variant::no_fact_semantics, base, hyper).config.use_semantics);
    CHECK(make_ablation(Variant::no_word_pooling, base, hyper).config.semantics.pooling == Pooling::none);
    CHECK(make_ablation(Variant::words_avg_pooling, base, hyper).config.semantics.pooling ==
          Pooling::words_avg);
    CHECK(make_ablation(Variant::word_max_pooling, base, hyper).config.semantics.pooling ==
          Pooling::interval_max);
    CHECK(make_ablation(Variant::words_max_pooling, base, hyper).config.semantics.pooling ==
          Pooling::words_max);
    CHECK_FALSE(make_ablation(Variant::no_pos, base, hyper).config.semantics.use_positions);
    const auto no_fc = make_ablation(Variant::no_fc, base, hyper).config;
    CHECK_FALSE(no_fc.use_fc);
    CHECK(no_fc.embedding_dim() == 553);
  }

  TEST_CASE("[full] equals a plain train and evaluate run") {
    const auto corpus = load_corpus(testing::fixture_corpus());
    const auto store = VectorStore::load(testing::fixture_vectors());
    HyperParams hyper;
    hyper.epochs = 4;
    const EncoderConfig cfg;
    const Variant only[] = {Variant::full};
    const auto rows = run_ablation(corpus, store, cfg, hyper, only, {});
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].ok);

    const auto run = train_on_corpus(corpus, store, cfg, hyper);
    const auto m = compute_metrics(build_index(corpus, store, run.result.params, cfg));
    CHECK(rows[0].metrics.top2 == m.top2);
    CHECK(rows[0].metrics.top3 == m.top3);
    CHECK(rows[0].metrics.cooccurrence == m.cooccurrence);
  }

  TEST_CASE("masked loss columns and CSV layout") {
    const auto corpus = load_corpus(testing::fixture_corpus());
    const auto store = VectorStore::load(testing::fixture_vectors());
    HyperParams hyper;
    hyper.epochs = 1;
    const Variant some[] = {Variant::no_classification, Variant::no_fc};
    const auto rows = run_ablation(corpus, store, EncoderConfig{}, hyper, some, {});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].l2_masked);
    CHECK_FALSE(rows[0].l1_masked);
    CHECK(ablation_table(rows).find("—") != std::string::npos);
    const auto csv = ablation_csv(rows);
    CHECK(csv.rfind("variant,top2,top3,cooccurrence,wall_ms,peak_bytes\n", 0) == 0);
    CHECK(csv.find("\nno-classification,") != std::string::npos);
    CHECK(csv.find("\nno-fc,") != std::string::npos);
  }

  TEST_CASE("a failing variant is flagged and the rest still run") {
    // An invalid margin makes every variant fail inside its own training run.
    const auto corpus = load_corpus(testing::fixture_corpus());
    const auto store = VectorStore::load(testing::fixture_vectors());
    HyperParams hyper;
    hyper.epochs = 1;
    hyper.margin = -1.0;
    const Variant some[] = {Variant::full, Variant::no_pos};
    const auto rows = run_ablation(corpus, store, EncoderConfig{}, hyper, some, {});
    REQUIRE(rows.size() == 2);
    CHECK_FALSE(rows[0].ok);
    CHECK_FALSE(rows[1].ok);
    CHECK_FALSE(rows[0].error.empty());
  }
}
