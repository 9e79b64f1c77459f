#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "emc/errors.hpp"
#include "emc/ensemble.hpp"
#include "emc/rng.hpp"
#include "support.hpp"

using namespace emc;
using emc::test::normal_vector;
using emc::test::random_memory;
using emc::test::small_hp;

namespace {

TClassifier make_classifier(std::size_t m, std::size_t d, std::vector<double> w,
                            std::vector<double> b) {
  TClassifier c(m, d);
  c.weights = std::move(w);
  c.biases = std::move(b);
  return c;
}

EnsembleMemory two_key_memory(std::vector<double> keys, const TClassifier& a, const TClassifier& b) {
  return EnsembleMemory(std::move(keys), {a, b});
}

double fd_loss(const EnsembleMemory& mem, std::span<const double> z, std::size_t label,
               const Hyperparams& hp) {
  return loss_for_label(label, ensemble_forward(mem, z, hp).y_hat);
}

}  // namespace

TEST_CASE("t_forward on zero parameters is zero") {
  TClassifier c(3, 4);
  const std::vector<double> z{1.0, -2.0, 3.0, 0.5};
  for (double v : t_forward(c, z, 250.0)) CHECK(v == 0.0);
}

TEST_CASE("t_forward scalar example") {
  const TClassifier c = make_classifier(1, 1, {1.0}, {0.0});
  const std::vector<double> z{250.0};
  CHECK(t_forward(c, z, 250.0)[0] == doctest::Approx(190.398538988941).epsilon(1e-12));
}

TEST_CASE("t_forward dimension mismatch") {
  TClassifier c(2, 3);
  const std::vector<double> z{1.0, 2.0};
  CHECK_THROWS_AS(t_forward(c, z, 1.0), ConfigError);
}

TEST_CASE("t_forward is bounded by tau") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const double tau = 0.5 + 3.0 * std::uniform_real_distribution<double>()(rng);
    TClassifier c(4, 6);
    c.weights = normal_vector(rng, 24, 5.0);
    const std::vector<double> z = normal_vector(rng, 6, 3.0);
    for (double v : t_forward(c, z, tau)) CHECK(std::abs(v) <= tau);
  }
}

TEST_CASE("cosine similarity examples") {
  const std::vector<double> e0{1, 0}, e1{0, 1}, a{1, 2}, b{2, 4}, d{1, 1}, zero{0, 0};
  CHECK(cosine_similarity(e0, e1) == 0.0);
  CHECK(cosine_similarity(a, b) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(e0, d) == doctest::Approx(0.707106781187).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_similarity(e0, zero), InputError);
}

TEST_CASE("top_k_select examples") {
  TClassifier c(1, 2);
  SUBCASE("ranked by similarity") {
    EnsembleMemory mem({1, 0, 0, 1, -1, 0}, {c, c, c});
    const std::vector<double> z{1, 0};
    const Selection s = top_k_select(mem, z, 2);
    CHECK(s.index == std::vector<std::size_t>{0, 1});
    CHECK(s.similarity[0] == doctest::Approx(1.0));
    CHECK(s.similarity[1] == doctest::Approx(0.0));
  }
  SUBCASE("ties go to the lower index") {
    EnsembleMemory mem({1, 0, 1, 0}, {c, c});
    const std::vector<double> z{1, 0};
    CHECK(top_k_select(mem, z, 1).index == std::vector<std::size_t>{0});
  }
  SUBCASE("k larger than n") {
    EnsembleMemory mem({1, 0}, {c});
    const std::vector<double> z{1, 0};
    CHECK_THROWS_AS(top_k_select(mem, z, 2), ConfigError);
  }
  SUBCASE("zero embedding") {
    EnsembleMemory mem({1, 0}, {c});
    const std::vector<double> z{0, 0};
    CHECK_THROWS_AS(top_k_select(mem, z, 1), InputError);
  }
}

TEST_CASE("top_k_select ranks a matching key first") {
  std::mt19937_64 rng(5);
  const EnsembleMemory mem = random_memory(rng, 16, 8, 3);
  for (std::size_t j = 0; j < 16; ++j) {
    const std::vector<double> z(mem.key(j).begin(), mem.key(j).end());
    const Selection s = top_k_select(mem, z, 4);
    CHECK(s.index[0] == j);
    CHECK(s.similarity[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("selection is distinct, sorted and invariant to positive scaling") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = emc::test::uniform_index(rng, 1, 40);
    const std::size_t d = emc::test::uniform_index(rng, 1, 12);
    const std::size_t k = emc::test::uniform_index(rng, 1, n);
    const EnsembleMemory mem = random_memory(rng, n, d, 2);
    std::vector<double> z = normal_vector(rng, d);
    const Selection s = top_k_select(mem, z, k);
    std::vector<std::size_t> sorted = s.index;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s.similarity[i - 1] >= s.similarity[i]);

    const double c = std::exp(std::uniform_real_distribution<double>(-5.0, 5.0)(rng));
    for (double& v : z) v *= c;
    CHECK(top_k_select(mem, z, k).index == s.index);
  }
}

TEST_CASE("ensemble_forward aggregation") {
  const TClassifier u = make_classifier(2, 2, {1, 0, 0, 1}, {0, 0});
  const TClassifier w = make_classifier(2, 2, {-1, 0.5, 2, 0}, {0.1, -0.2});
  const double tau = 3.0;

  SUBCASE("single member reduces to t_forward") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      const EnsembleMemory mem = random_memory(rng, 1, 5, 3);
      const std::vector<double> z = normal_vector(rng, 5);
      const Hyperparams hp = small_hp(1, 5, 3, 1, tau);
      const auto y = ensemble_forward(mem, z, hp).y_hat;
      const auto t = t_forward(mem.classifier(0), z, tau);
      for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(y[i] - t[i]) < 1e-12);
    }
  }

  SUBCASE("identical members give their common output") {
    const EnsembleMemory mem = two_key_memory({1, 0, 0.3, 1}, u, u);
    const std::vector<double> z{0.7, 0.2};
    const auto y = ensemble_forward(mem, z, small_hp(2, 2, 2, 2, tau)).y_hat;
    const auto t = t_forward(u, z, tau);
    CHECK(y[0] == doctest::Approx(t[0]).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(t[1]).epsilon(1e-14));
  }

  SUBCASE("similarities 0.8 and 0.4") {
    // Keys at angles whose cosines with z = e0 are exactly 0.8 and 0.4.
    const double s2 = std::sqrt(1.0 - 0.16);
    const EnsembleMemory mem = two_key_memory({0.8, 0.6, 0.4, s2}, u, w);
    const std::vector<double> z{1.0, 0.0};
    const ModelOutput out = ensemble_forward(mem, z, small_hp(2, 2, 2, 2, tau));
    CHECK(out.selected.similarity[0] == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(out.selected.similarity[1] == doctest::Approx(0.4).epsilon(1e-14));
    const auto tu = t_forward(u, z, tau);
    const auto tw = t_forward(w, z, tau);
    for (std::size_t i = 0; i < 2; ++i) {
      // Scalar recomputation: tau * tanh(psi / tau) for each member by hand.
      const double pu = u.weights[i * 2] * 1.0 + u.biases[i];
      const double pw = w.weights[i * 2] * 1.0 + w.biases[i];
      const double expect = (0.8 * tau * std::tanh(pu / tau) + 0.4 * tau * std::tanh(pw / tau)) / 1.2;
      CHECK(out.y_hat[i] == doctest::Approx(expect).epsilon(1e-13));
      CHECK(out.y_hat[i] == doctest::Approx((0.8 * tu[i] + 0.4 * tw[i]) / 1.2).epsilon(1e-13));
    }
  }

  SUBCASE("degenerate similarity sum") {
    // Opposite keys: similarities +s and -s cancel.
    const EnsembleMemory mem = two_key_memory({1, 1, -1, -1}, u, w);
    const std::vector<double> z{1.0, 0.0};
    CHECK_THROWS_AS(ensemble_forward(mem, z, small_hp(2, 2, 2, 2, tau)),
                    DegenerateAggregationError);
  }
}

TEST_CASE("output bound holds for random ensembles") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const double tau = 0.25 + 2.0 * std::uniform_real_distribution<double>()(rng);
    const EnsembleMemory mem = random_memory(rng, 6, 4, 3, 4.0);
    std::vector<double> z = normal_vector(rng, 4, 3.0);
    // Keep similarities positive so the aggregation is convex.
    for (std::size_t j = 0; j < 4; ++j) z[j] = mem.key(0)[j];
    const auto y = ensemble_forward(mem, z, small_hp(6, 4, 3, 1, tau)).y_hat;
    for (double v : y) CHECK(std::abs(v) <= tau);
  }
}

TEST_CASE("loss") {
  const std::vector<double> e2{0, 0, 1}, y_hat{1, 2, 3}, zero{0, 0, 0}, not_one_hot{1, 1, 0};
  CHECK(loss(e2, y_hat) == -3.0);
  CHECK(loss(e2, zero) == 0.0);
  CHECK_THROWS_AS(loss(not_one_hot, y_hat), InputError);
  CHECK(loss_for_label(1, y_hat) == -2.0);
}

TEST_CASE("gradient examples") {
  SUBCASE("single classifier at zero parameters") {
    TClassifier c(2, 1);
    EnsembleMemory mem({1.0}, {c});
    const std::vector<double> z{1.0};
    const Hyperparams hp = small_hp(1, 1, 2, 1);
    const Gradients g = grad(mem, z, 1, hp);
    CHECK(g[0].weights[1] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(g[0].weights[0] == 0.0);
    CHECK(g[0].biases[1] == doctest::Approx(-1.0).epsilon(1e-15));
    // Central difference at step 1e-4.
    const double h = 1e-4;
    EnsembleMemory plus = mem, minus = mem;
    plus.classifier(0).weights[1] += h;
    minus.classifier(0).weights[1] -= h;
    const double fd = (fd_loss(plus, z, 1, hp) - fd_loss(minus, z, 1, hp)) / (2 * h);
    CHECK(emc::test::rel_error(fd, g[0].weights[1]) < 1e-3);
  }

  SUBCASE("gradients split 2/3 and 1/3 for similarities 0.8 and 0.4") {
    TClassifier c(2, 2);
    const double s2 = std::sqrt(1.0 - 0.16);
    EnsembleMemory mem({0.8, 0.6, 0.4, s2}, {c, c});
    const std::vector<double> z{1.0, 0.0};
    const Gradients g = grad(mem, z, 0, small_hp(2, 2, 2, 2));
    CHECK(g[0].weights[0] == doctest::Approx(-2.0 / 3.0).epsilon(1e-14));
    CHECK(g[1].weights[0] == doctest::Approx(-1.0 / 3.0).epsilon(1e-14));
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(2024);
  const double h = 1e-4;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = emc::test::uniform_index(rng, 1, 4);
    const std::size_t d = emc::test::uniform_index(rng, 1, 8);
    const std::size_t m = emc::test::uniform_index(rng, 1, 4);
    const std::size_t k = emc::test::uniform_index(rng, 1, std::min<std::size_t>(2, n));
    const double tau = 0.5 + 2.0 * std::uniform_real_distribution<double>()(rng);
    const EnsembleMemory mem = random_memory(rng, n, d, m);
    const std::vector<double> z = normal_vector(rng, d);
    const std::size_t label = emc::test::uniform_index(rng, 0, m - 1);
    const Hyperparams hp = small_hp(n, d, m, k, tau);
    Gradients g(n, m, d);
    try {
      g = grad(mem, z, label, hp);
    } catch (const DegenerateAggregationError&) {
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < m * d; ++p) {
        EnsembleMemory plus = mem, minus = mem;
        plus.classifier(i).weights[p] += h;
        minus.classifier(i).weights[p] -= h;
        const double fd = (fd_loss(plus, z, label, hp) - fd_loss(minus, z, label, hp)) / (2 * h);
        CHECK(emc::test::rel_error(fd, g[i].weights[p]) < 1e-3);
      }
      for (std::size_t r = 0; r < m; ++r) {
        EnsembleMemory plus = mem, minus = mem;
        plus.classifier(i).biases[r] += h;
        minus.classifier(i).biases[r] -= h;
        const double fd = (fd_loss(plus, z, label, hp) - fd_loss(minus, z, label, hp)) / (2 * h);
        CHECK(emc::test::rel_error(fd, g[i].biases[r]) < 1e-3);
      }
    }
  }
}

TEST_CASE("gradient sparsity") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = emc::test::uniform_index(rng, 1, 8);
    const std::size_t d = emc::test::uniform_index(rng, 1, 16);
    const std::size_t m = emc::test::uniform_index(rng, 1, 10);
    const std::size_t k = emc::test::uniform_index(rng, 1, n);
    const EnsembleMemory mem = random_memory(rng, n, d, m);
    const std::vector<double> z = normal_vector(rng, d);
    const std::size_t label = emc::test::uniform_index(rng, 0, m - 1);
    const Hyperparams hp = small_hp(n, d, m, k);
    const Selection sel = top_k_select(mem, z, k);
    Gradients g(n, m, d);
    try {
      g = grad(mem, z, label, hp);
    } catch (const DegenerateAggregationError&) {
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const bool selected = std::find(sel.index.begin(), sel.index.end(), i) != sel.index.end();
      for (std::size_t r = 0; r < m; ++r) {
        if (selected && r == label) continue;
        for (double v : g[i].row(r)) CHECK(v == 0.0);
        CHECK(g[i].biases[r] == 0.0);
      }
    }
  }
}

TEST_CASE("sign_update examples") {
  TClassifier p(1, 1), g(1, 1);
  Hyperparams hp = small_hp(1, 1, 1, 1);

  p.weights[0] = 1.0;
  g.weights[0] = 3.7;
  hp.decay = 0.0;
  sign_update(p, g, hp);
  CHECK(p.weights[0] == doctest::Approx(0.9999).epsilon(1e-15));

  p.weights[0] = 1.0;
  g.weights[0] = 0.0;
  hp.decay = 1e-4;
  sign_update(p, g, hp);
  CHECK(p.weights[0] == doctest::Approx(0.9999).epsilon(1e-15));

  p.weights[0] = 1.0;
  g.weights[0] = -2.0;
  sign_update(p, g, hp);
  CHECK(p.weights[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("bias decay flag") {
  TClassifier p(1, 1), g(1, 1);
  p.biases[0] = 1.0;
  Hyperparams hp = small_hp(1, 1, 1, 1);
  hp.decay_biases = false;
  sign_update(p, g, hp);
  CHECK(p.biases[0] == 1.0);
  hp.decay_biases = true;
  sign_update(p, g, hp);
  CHECK(p.biases[0] == doctest::Approx(0.9999).epsilon(1e-15));
}

TEST_CASE("sign_update rejects non-finite results") {
  TClassifier p(1, 1), g(1, 1);
  p.weights[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(sign_update(p, g, small_hp(1, 1, 1, 1)), NumericError);
}

TEST_CASE("step magnitude without decay is exactly lr or zero") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 6, d = 5, m = 4;
    EnsembleMemory mem = random_memory(rng, n, d, m);
    Hyperparams hp = small_hp(n, d, m, 3);
    hp.decay = 0.0;
    hp.lr = 0.0625;  // a power of two keeps theta +- lr exact
    std::vector<std::vector<double>> zs;
    std::vector<Example> batch;
    for (int b = 0; b < 4; ++b) zs.push_back(normal_vector(rng, d));
    for (int b = 0; b < 4; ++b) batch.push_back({zs[b], emc::test::uniform_index(rng, 0, m - 1)});
    const EnsembleMemory before = mem;
    Gradients scratch(n, m, d);
    try {
      train_step(mem, batch, hp, scratch);
    } catch (const DegenerateAggregationError&) {
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = before.classifier(i);
      const auto& b = mem.classifier(i);
      for (std::size_t p = 0; p < a.weights.size(); ++p) {
        const double delta = std::abs(b.weights[p] - a.weights[p]);
        CHECK((delta == 0.0 || std::abs(delta - hp.lr) < 1e-15));
      }
    }
  }
}

TEST_CASE("keys are untouched by training") {
  std::mt19937_64 rng(4);
  Hyperparams hp = small_hp(32, 8, 5, 4);
  hp.seed = 17;
  EnsembleMemory mem = EnsembleMemory::initialize(hp);
  const std::vector<double> keys(mem.keys().begin(), mem.keys().end());
  Gradients scratch(32, 5, 8);
  for (int step = 0; step < 100; ++step) {
    std::vector<std::vector<double>> zs;
    std::vector<Example> batch;
    for (int b = 0; b < 8; ++b) zs.push_back(normal_vector(rng, 8));
    for (int b = 0; b < 8; ++b) batch.push_back({zs[b], emc::test::uniform_index(rng, 0, 4)});
    train_step(mem, batch, hp, scratch);
  }
  REQUIRE(keys.size() == mem.keys().size());
  CHECK(std::memcmp(keys.data(), mem.keys().data(), keys.size() * sizeof(double)) == 0);
}

TEST_CASE("initialization") {
  Hyperparams hp = small_hp(64, 32, 10, 8);
  hp.seed = 3;
  const EnsembleMemory mem = EnsembleMemory::initialize(hp);
  double key_sum = 0, key_sq = 0, w_sq = 0, w_max = 0;
  for (double v : mem.keys()) {
    key_sum += v;
    key_sq += v * v;
  }
  std::size_t w_count = 0;
  for (const TClassifier& c : mem.classifiers()) {
    for (double b : c.biases) CHECK(b == 0.0);
    for (double w : c.weights) {
      w_sq += w * w;
      w_max = std::max(w_max, std::abs(w));
      ++w_count;
    }
  }
  const double nk = static_cast<double>(mem.keys().size());
  CHECK(key_sum / nk == doctest::Approx(0.0).epsilon(0.05));
  CHECK(key_sq / nk == doctest::Approx(1.0).epsilon(0.05));
  // Variance scaling: Var(w) = scale / fan_in after truncation.
  CHECK(w_sq / static_cast<double>(w_count) == doctest::Approx(1.0 / 32).epsilon(0.05));
  CHECK(w_max <= 2.0 * variance_scaling_stddev(1.0, 32));
  CHECK(EnsembleMemory::initialize(hp).classifier(5) == mem.classifier(5));
}

TEST_CASE("hyperparameter validation") {
  Hyperparams hp = small_hp(4, 2, 2, 2);
  CHECK_NOTHROW(hp.validate());
  hp.k = 5;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp.k = 0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp = small_hp(4, 2, 2, 2);
  hp.tau = 0.0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp = small_hp(4, 2, 2, 2);
  hp.lr = 0.0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp = small_hp(4, 2, 2, 2);
  hp.decay = -1.0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
}

TEST_CASE("predict") {
  const std::vector<double> a{0.1, 5.0, -2.0}, same{1.0, 1.0, 1.0};
  CHECK(argmax(a) == 1);
  CHECK(argmax(same) == 0);

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const EnsembleMemory mem = random_memory(rng, 10, 6, 4);
    std::vector<double> z = normal_vector(rng, 6);
    const Hyperparams hp = small_hp(10, 6, 4, 3);
    CHECK(predict(mem, z, hp) == argmax(ensemble_forward(mem, z, hp).y_hat));
    const auto sel = top_k_select(mem, z, 3);
    std::vector<double> z2 = z;
    for (double& v : z2) v *= 2.0;
    CHECK(top_k_select(mem, z2, 3) == sel);
  }
}

TEST_CASE("targeted increase outgrows collateral increase") {
  // One t-classifier on class-balanced clustered data: E(i, i) is the mean
  // output of neuron i on class i, E(j, i) on other classes.
  std::mt19937_64 rng(99);
  const std::size_t d = 16, m = 4;
  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < m; ++c) centers.push_back(normal_vector(rng, d, 1.0));
  auto sample = [&](std::size_t c) {
    std::vector<double> z = normal_vector(rng, d, 0.3);
    for (std::size_t j = 0; j < d; ++j) z[j] += centers[c][j];
    return z;
  };
  std::vector<std::vector<double>> test_z;
  std::vector<std::size_t> test_y;
  for (std::size_t c = 0; c < m; ++c) {
    for (int i = 0; i < 50; ++i) {
      test_z.push_back(sample(c));
      test_y.push_back(c);
    }
  }

  Hyperparams hp = small_hp(1, d, m, 1);
  hp.seed = 1;
  hp.init_scale = 10.0;
  EnsembleMemory mem = EnsembleMemory::initialize(hp);
  auto margin = [&] {
    std::vector<double> sum(m * m, 0.0), count(m, 0.0);
    for (std::size_t i = 0; i < test_z.size(); ++i) {
      const auto y = ensemble_forward(mem, test_z[i], hp).y_hat;
      for (std::size_t r = 0; r < m; ++r) sum[test_y[i] * m + r] += y[r];
      count[test_y[i]] += 1.0;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double others = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (j != i) others += sum[j * m + i] / count[j];
      }
      total += sum[i * m + i] / count[i] - others / static_cast<double>(m - 1);
    }
    return total / static_cast<double>(m);
  };

  const double before = margin();
  Gradients scratch(1, m, d);
  for (int step = 0; step < 500; ++step) {
    std::vector<std::vector<double>> zs;
    std::vector<Example> batch;
    for (std::size_t c = 0; c < m; ++c) zs.push_back(sample(c));
    for (std::size_t c = 0; c < m; ++c) batch.push_back({zs[c], c});
    train_step(mem, batch, hp, scratch);
  }
  CHECK(margin() > before);
}
