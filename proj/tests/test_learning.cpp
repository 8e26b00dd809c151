#include <doctest.h>

#include <cmath>

#include "chartvec/corpus.hpp"
#include "chartvec/error.hpp"
#include "chartvec/evaluation.hpp"
#include "chartvec/learning.hpp"
#include "support.hpp"

using namespace chartvec;

namespace {

std::span<const double> sp(const std::vector<double>& v) { return v; }

double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Rows of `m` as plain vectors, for the hand-written loss oracle.
std::vector<std::vector<double>> rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out.emplace_back();
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.back().push_back(m(r, c));
  }
  return out;
}

double oracle_total(const Eigen::MatrixXd& e, double alpha, double beta, double margin) {
  const auto r = rows(e);
  double total = 0.0;
  for (std::size_t k = 0; 4 * k < r.size(); ++k) {
    const auto& p = r[4 * k];
    const auto& m = r[4 * k + 1];
    const auto& n = r[4 * k + 2];
    const auto& neg = r[4 * k + 3];
    std::vector<double> half(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) half[i] = (p[i] + n[i]) / 2.0;
    const double l1 = dist(m, half) + alpha * (dist(p, m) + dist(m, n) + dist(p, n));
    const double l2 = std::max(0.0, dist(p, n) - dist(p, neg) + margin);
    total += l1 + beta * l2;
  }
  return total;
}

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.conv_channels = {60, 6, 3};
  cfg.hidden_dim = 12;
  cfg.output_dim = 5;
  return cfg;
}

double max_abs(const EncoderParams& p) {
  double m = 0.0;
  for_each_trainable(p, [&](std::string_view, std::span<const double> t) {
    for (double x : t) m = std::max(m, std::abs(x));
  });
  return m;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("interpolation loss on hand-computed points") {
    const std::vector<double> a{0, 0}, b{1, 1}, c{2, 2};
    CHECK(interpolation_loss(sp(a), sp(b), sp(c), 0.0).value == 0.0);
    const auto l = interpolation_loss(sp(a), sp(b), sp(c), 1.0);
    CHECK(l.interp_term == 0.0);
    CHECK(l.value == doctest::Approx(4.0 * std::sqrt(2.0)).epsilon(1e-15));

    const std::vector<double> o{0, 0}, x{2, 0};
    CHECK(interpolation_loss(sp(o), sp(o), sp(x), 0.0).value == 1.0);
  }

  TEST_CASE("interpolation term is exactly zero for midpoint-collinear points") {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> p(7), n(7), m(7);
      for (std::size_t i = 0; i < 7; ++i) {
        // Dyadic values keep the midpoint exact in floating point.
        p[i] = static_cast<double>(static_cast<int>(rng.below(64)) - 32) / 8.0;
        n[i] = static_cast<double>(static_cast<int>(rng.below(64)) - 32) / 8.0;
        m[i] = (p[i] + n[i]) / 2.0;
      }
      CHECK(interpolation_loss(sp(p), sp(m), sp(n), 0.5).interp_term == 0.0);
    }
  }

  TEST_CASE("triplet hinge") {
    const std::vector<double> a{0, 0}, p1{1, 0}, n5{0, 5};
    CHECK(triplet_loss(sp(a), sp(p1), sp(n5), 1.0) == 0.0);
    const std::vector<double> p2{2, 0}, n1{0, 1};
    CHECK(triplet_loss(sp(a), sp(p2), sp(n1), 1.0) == 2.0);
    CHECK(triplet_loss(sp(a), sp(a), sp(a), 1.0) == 1.0);
  }

  TEST_CASE("triplet loss vanishes whenever d(a,n) >= d(a,p) + m") {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> a(4), p(4), n(4);
      for (auto* v : {&a, &p, &n}) {
        for (auto& x : *v) x = rng.uniform(-3, 3);
      }
      const double m = rng.uniform(0.1, 2.0);
      const double value = triplet_loss(sp(a), sp(p), sp(n), m);
      CHECK(value >= 0.0);
      if (dist(a, n) >= dist(a, p) + m) CHECK(value == 0.0);
    }
  }

  TEST_CASE("euclidean gradient") {
    const std::vector<double> x{3, 1, -2}, y{1, 1, 0};
    const auto g = euclidean_grad(sp(x), sp(y));
    const double d = std::sqrt(8.0);
    CHECK(g(0) == doctest::Approx(2.0 / d));
    CHECK(g(1) == 0.0);
    CHECK(g(2) == doctest::Approx(-2.0 / d));
    CHECK(euclidean_grad(sp(x), sp(x)).isZero(0.0));
  }

  TEST_CASE("two-sample toy batch matches the hand-summed losses") {
    Eigen::MatrixXd e(8, 2);
    e << 0, 0, 1, 2, 2, 0, 5, 5,   //
        1, 1, 1, 1, 3, 3, 1.5, 1.5;
    HyperParams h;
    h.alpha = 0.3;
    h.beta = 0.7;
    h.margin = 1.0;
    const auto loss = quadruple_loss(e, h);
    CHECK(loss.total == doctest::Approx(oracle_total(e, 0.3, 0.7, 1.0)).epsilon(1e-14));
    CHECK(loss.l1 == doctest::Approx(loss.interp_term + 0.3 * loss.pair_term).epsilon(1e-15));
    CHECK(loss.total == doctest::Approx(loss.l1 + 0.7 * loss.l2).epsilon(1e-15));
  }

  TEST_CASE("beta = 0 reduces the total to l1 exactly") {
    Rng rng(3);
    Eigen::MatrixXd e(16, 6);
    for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
    HyperParams h;
    h.beta = 0.0;
    const auto loss = quadruple_loss(e, h);
    CHECK(loss.total == loss.l1);
  }

  TEST_CASE("total is monotone in beta") {
    Rng rng(4);
    Eigen::MatrixXd e(12, 3);
    for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
    double last = -1.0;
    for (double beta : {0.0, 0.5, 1.0, 2.0, 8.0}) {
      HyperParams h;
      h.beta = beta;
      const double t = quadruple_loss(e, h).total;
      CHECK(t >= last);
      last = t;
    }
  }

  TEST_CASE("collinear triple with inactive hinge has zero loss and zero gradient") {
    Eigen::MatrixXd e(4, 2);
    e << 0, 0, 1, 0, 2, 0, 0, 10;
    HyperParams h;
    h.alpha = 0.0;
    Eigen::MatrixXd d;
    const auto loss = quadruple_loss(e, h, &d);
    CHECK(loss.total == 0.0);
    CHECK(d.isZero(0.0));
  }

  TEST_CASE("embedding gradient matches central differences") {
    Rng rng(5);
    Eigen::MatrixXd e(8, 4);
    for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
    HyperParams h;
    h.margin = 3.0;  // keep both hinges active
    Eigen::MatrixXd d;
    quadruple_loss(e, h, &d);
    const double eps = 1e-6;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      Eigen::MatrixXd up = e, down = e;
      up.data()[i] += eps;
      down.data()[i] -= eps;
      const double numeric = (quadruple_loss(up, h).total - quadruple_loss(down, h).total) / (2 * eps);
      CHECK(d.data()[i] == doctest::Approx(numeric).epsilon(1e-6));
    }
  }
}

TEST_SUITE("adam") {
  TEST_CASE("constant gradient moves each parameter by lr per step") {
    const auto cfg = small_config();
    auto params = init_params(1, cfg);
    const auto start = params;
    auto grads = zeros_like(params);
    Rng rng(2);
    for_each_trainable(grads, [&](std::string_view, std::span<double> t) {
      for (auto& x : t) x = rng.uniform(-2.0, 2.0);
    });
    auto state = adam_init(params);
    const double lr = 1e-3;
    for (int i = 0; i < 1000; ++i) adam_step(params, grads, state, lr);
    CHECK(state.step == 1000);

    // Scalar Adam recurrence written out directly.
    auto expected_delta = [&](double g) {
      double m = 0.0, v = 0.0, delta = 0.0;
      for (int t = 1; t <= 1000; ++t) {
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.999, t));
        delta -= lr * mh / (std::sqrt(vh) + 1e-8);
      }
      return delta;
    };

    std::vector<double> before, after, g;
    for_each_trainable(start, [&](std::string_view, std::span<const double> t) {
      before.insert(before.end(), t.begin(), t.end());
    });
    for_each_trainable(params, [&](std::string_view, std::span<const double> t) {
      after.insert(after.end(), t.begin(), t.end());
    });
    for_each_trainable(grads, [&](std::string_view, std::span<const double> t) {
      g.insert(g.end(), t.begin(), t.end());
    });
    for (std::size_t i = 0; i < g.size(); i += 7) {
      const double delta = after[i] - before[i];
      CHECK(delta == doctest::Approx(expected_delta(g[i])).epsilon(1e-9));
      if (std::abs(g[i]) > 1e-3) {
        CHECK(delta == doctest::Approx(-1000 * lr * (g[i] > 0 ? 1.0 : -1.0)).epsilon(1e-4));
      }
    }
  }

  TEST_CASE("zero gradient leaves parameters unchanged and decays moments") {
    const auto cfg = small_config();
    auto params = init_params(3, cfg);
    const auto start = params;
    auto grads = zeros_like(params);
    for_each_trainable(grads, [](std::string_view, std::span<double> t) {
      for (auto& x : t) x = 1.0;
    });
    auto state = adam_init(params);
    adam_step(params, grads, state, 0.01);
    const double m1 = max_abs(state.first_moment);
    const auto moved = params;
    adam_step(params, zeros_like(params), state, 0.0);
    CHECK(params == moved);
    CHECK(max_abs(state.first_moment) == doctest::Approx(0.9 * m1));
    CHECK_FALSE(moved == start);
  }

  TEST_CASE("identical state gives identical updates") {
    const auto cfg = small_config();
    auto a = init_params(4, cfg);
    auto b = a;
    auto g = init_params(5, cfg);
    auto sa = adam_init(a);
    auto sb = adam_init(b);
    for (int i = 0; i < 5; ++i) {
      adam_step(a, g, sa, 0.01);
      adam_step(b, g, sb, 0.01);
    }
    CHECK(a == b);
  }
}

TEST_SUITE("gradcheck") {
  TEST_CASE("analytic gradients match finite differences") {
    GradCheckOptions opts;
    const auto r = grad_check_random(opts);
    CHECK(r.checked >= 200);
    CHECK(r.max_relative_error < 1e-4);
    // Every trainable tensor is covered.
    std::size_t tensors = 0;
    for_each_trainable(init_params(0, EncoderConfig{}),
                       [&](std::string_view, std::span<const double>) { ++tensors; });
    CHECK(r.tensors.size() == tensors);
  }

  TEST_CASE("several seeds") {
    for (std::uint64_t seed : {1, 2, 3}) {
      GradCheckOptions opts;
      opts.seed = seed;
      opts.coords_per_tensor = 8;
      CHECK(grad_check_random(opts).max_relative_error < 1e-4);
    }
  }

  TEST_CASE("no-fc and no-hidden-norm networks") {
    EncoderConfig no_fc;
    no_fc.use_fc = false;
    EncoderConfig no_norm;
    no_norm.hidden_batch_norm = false;
    GradCheckOptions opts;
    opts.coords_per_tensor = 10;
    CHECK(grad_check_random(opts, no_fc).max_relative_error < 1e-4);
    CHECK(grad_check_random(opts, no_norm).max_relative_error < 1e-4);
  }

  TEST_CASE("an injected gradient fault is caught") {
    GradCheckOptions opts;
    opts.inject_fault = true;
    CHECK(grad_check_random(opts).max_relative_error > 1e-2);
  }

  TEST_CASE("epsilon outside the valid window degrades the check") {
    GradCheckOptions good;
    const double base = grad_check_random(good).max_relative_error;
    GradCheckOptions wide;
    wide.epsilon = 1e-2;
    GradCheckOptions tiny;
    tiny.epsilon = 1e-10;
    CHECK(grad_check_random(wide).max_relative_error > base);
    CHECK(grad_check_random(tiny).max_relative_error > base);
  }
}

TEST_SUITE("training") {
  TEST_CASE("paper-scale step count") {
    CHECK(planned_steps(42222, 128, 10) == 3300);
    CHECK(planned_steps(128, 128, 1) == 1);
    CHECK(planned_steps(129, 128, 2) == 4);
  }

  TEST_CASE("fixture loss drops below a tenth of the first epoch") {
    const auto corpus = load_corpus(testing::fixture_corpus());
    const auto store = VectorStore::load(testing::fixture_vectors());
    HyperParams h;
    h.epochs = 200;
    const auto run = train_on_corpus(corpus, store, EncoderConfig{}, h);
    REQUIRE(run.result.history.size() == 200);
    CHECK(run.result.history.back().loss.total < 0.1 * run.result.history.front().loss.total);
    CHECK(all_finite(run.result.params));
  }

  TEST_CASE("same seed gives identical parameters, other seeds do not") {
    const auto corpus = load_corpus(testing::fixture_corpus());
    const auto store = VectorStore::load(testing::fixture_vectors());
    HyperParams h;
    h.epochs = 3;
    h.batch_size = 16;
    const auto a = train_on_corpus(corpus, store, EncoderConfig{}, h);
    const auto b = train_on_corpus(corpus, store, EncoderConfig{}, h);
    CHECK(a.result.params == b.result.params);
    CHECK(history_csv(a.result.history).substr(0, 40) == history_csv(b.result.history).substr(0, 40));
    h.seed = 1;
    const auto c = train_on_corpus(corpus, store, EncoderConfig{}, h);
    CHECK_FALSE(a.result.params == c.result.params);
    CHECK(a.result.steps == 3 * ((a.samples + 15) / 16));
  }

  TEST_CASE("zero epochs return the initial parameters") {
    const auto corpus = load_corpus(testing::fixture_corpus());
    const auto store = VectorStore::load(testing::fixture_vectors());
    HyperParams h;
    h.epochs = 0;
    const auto run = train_on_corpus(corpus, store, EncoderConfig{}, h);
    CHECK(run.result.history.empty());
    CHECK(run.result.steps == 0);
    CHECK(run.result.params == init_params(derive_seed(0, 1), EncoderConfig{}));
  }

  TEST_CASE("hyperparameter validation") {
    HyperParams h;
    h.margin = 0.0;
    CHECK_THROWS_AS(validate(h), Error);
    h = {};
    h.batch_size = 0;
    CHECK_THROWS_AS(validate(h), Error);
    h = {};
    h.alpha = -1.0;
    CHECK_THROWS_AS(validate(h), Error);
  }

  TEST_CASE("history CSV layout") {
    std::vector<EpochRecord> h(1);
    h[0].epoch = 1;
    h[0].loss.total = 2.5;
    const auto csv = history_csv(h);
    CHECK(csv.rfind("epoch,interp_term,pair_term,l1,l2,total,wall_ms\n", 0) == 0);
    CHECK(csv.find("\n1,") != std::string::npos);
  }
}
