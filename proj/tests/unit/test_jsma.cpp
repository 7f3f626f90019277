#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evb/error.hpp"
#include "evb/jsma.hpp"
#include "evb/synthdata.hpp"
#include "support.hpp"

using namespace evb;

namespace {

// Logit model z = W x + b with no hidden layer.
MlpModel linear_model(const Eigen::MatrixXd& w, const Eigen::Vector2d& b) {
  MlpModel model(dense_architecture(static_cast<std::size_t>(w.cols()), std::span<const std::size_t>{}));
  model.set_parameters(0, w, b);
  return model;
}

// Feature whose single +theta move (clipped at 1) raises p_clean the most,
// over features that can still grow. `margin` is the gap to the runner-up.
std::size_t brute_force_best(const MlpModel& model, const std::vector<double>& x, double theta, double* margin) {
  std::vector<std::pair<double, std::size_t>> gains;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] >= kSaturationLevel) continue;
    auto y = x;
    y[j] = std::min(y[j] + theta, 1.0);
    gains.emplace_back(model.forward(y).clean, j);
  }
  std::stable_sort(gains.begin(), gains.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  *margin = gains.size() > 1 ? gains[0].first - gains[1].first : INFINITY;
  return gains[0].second;
}

double p_clean_after(const MlpModel& model, std::vector<double> x, std::span<const std::size_t> order, double theta) {
  for (std::size_t j : order) x[j] = std::min(x[j] + theta, 1.0);
  return model.forward(x).clean;
}

}  // namespace

TEST_SUITE("jsma") {

TEST_CASE("saliency of a zero model is zero") {
  const MlpModel model(dense_architecture(5, std::vector<std::size_t>{3}));
  for (double s : saliency_scores(model, std::vector<double>(5, 0.3))) CHECK(s == 0.0);
}

TEST_CASE("saliency equals twice the clean-class gradient") {
  Rng rng(12);
  for (int t = 0; t < 30; ++t) {
    const auto model = test::random_model(6, {5}, 40 + t);
    const auto x = test::random_point(6, rng);
    const auto jac = model.input_jacobian(x);
    const auto scores = saliency_scores(model, x);
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(scores[j] == doctest::Approx(2.0 * jac(0, static_cast<Eigen::Index>(j))).epsilon(1e-12));
    }
  }
}

TEST_CASE("first selection agrees with single-feature brute force") {
  Rng rng(31337);
  std::size_t agree = 0;
  std::size_t counted = 0;
  for (int t = 0; t < 300; ++t) {
    const std::size_t m = 2 + rng.index(7);
    const auto model = test::random_model(m, {6}, 5000 + t);
    const auto x = test::random_point(m, rng);
    if (model.predict_class(x) != Label::malware) continue;
    AttackConfig cfg;
    cfg.theta = 0.01;
    cfg.gamma = 1.0;
    cfg.max_iters = 1;
    double margin = 0.0;
    const std::size_t expected = brute_force_best(model, x, cfg.theta, &margin);
    if (margin <= 1e-9) continue;
    const auto r = jsma_attack(model, test::make_fv(x), cfg);
    REQUIRE(r.modified_features.size() == 1);
    ++counted;
    agree += r.modified_features.front() == expected ? 1 : 0;
  }
  CHECK(counted > 100);
  CHECK(static_cast<double>(agree) >= 0.99 * static_cast<double>(counted));
}

TEST_CASE("four-feature attack is at least as good as every ordering of equal length") {
  Rng rng(404);
  for (int t = 0; t < 100; ++t) {
    Eigen::MatrixXd w(2, 4);
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(-1, 1);
    const auto model = linear_model(w, {0.0, 6.0});
    const auto x = test::random_point(4, rng, 0.0, 0.8);
    for (std::size_t budget = 1; budget <= 4; ++budget) {
      AttackConfig cfg;
      cfg.theta = 0.1;
      cfg.gamma = static_cast<double>(budget) / 4.0;
      const auto r = jsma_attack(model, test::make_fv(x), cfg);
      const double achieved = model.forward(r.adversarial.values).clean;
      // enumerate every ordered selection of `budget` distinct features
      std::vector<std::size_t> perm{0, 1, 2, 3};
      double best = 0.0;
      do {
        best = std::max(best, p_clean_after(model, x, std::span(perm).first(budget), cfg.theta));
      } while (std::next_permutation(perm.begin(), perm.end()));
      if (r.evaded_source) {
        CHECK(achieved > 0.5);
      } else {
        CHECK(achieved >= best - 1e-12);
      }
    }
  }
}

TEST_CASE("selection order on a linear model follows the logit weight gap") {
  // p_clean - p_malware has gradient 2 p_c p_m (W0 - W1), so the greedy order
  // is the descending order of W0j - W1j regardless of x.
  Eigen::MatrixXd w(2, 4);
  w << 0.3, -0.1, 0.7, 0.2,
       0.1, 0.4, -0.2, 0.2;
  const auto model = linear_model(w, {0.0, 40.0});
  const std::vector<double> gaps{0.2, -0.5, 0.9, 0.0};
  std::vector<std::size_t> expected{0, 1, 2, 3};
  std::stable_sort(expected.begin(), expected.end(), [&](auto a, auto b) { return gaps[a] > gaps[b]; });

  AttackConfig cfg;
  cfg.theta = 0.1;
  cfg.gamma = 1.0;
  const auto r = jsma_attack(model, test::make_fv({0.1, 0.2, 0.3, 0.4}), cfg);
  CHECK(r.modified_features == expected);
  CHECK_FALSE(r.evaded_source);
  CHECK(r.iterations == 4);
  CHECK(r.adversarial.values[2] == doctest::Approx(0.4));
}

TEST_CASE("exhaustive order oracle on random linear models") {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    Eigen::MatrixXd w(2, 4);
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(-1, 1);
    const auto model = linear_model(w, {0.0, 40.0});
    std::vector<std::size_t> expected{0, 1, 2, 3};
    std::stable_sort(expected.begin(), expected.end(),
                     [&](auto a, auto b) { return w(0, a) - w(1, a) > w(0, b) - w(1, b); });
    AttackConfig cfg;
    cfg.theta = 0.05;
    cfg.gamma = 0.75;
    const auto r = jsma_attack(model, test::make_fv(test::random_point(4, rng, 0.0, 0.9)), cfg);
    expected.resize(3);
    CHECK(r.modified_features == expected);
  }
}

TEST_CASE("equal scores go to the lowest index") {
  Eigen::MatrixXd w(2, 3);
  w << 0.5, 0.5, 0.5,
       0.0, 0.0, 0.0;
  const auto model = linear_model(w, {0.0, 40.0});
  AttackConfig cfg;
  cfg.gamma = 1.0;
  const auto r = jsma_attack(model, test::make_fv({0.0, 0.0, 0.0}), cfg);
  CHECK(r.modified_features == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("continuous and binary steps") {
  Eigen::MatrixXd w(2, 3);
  w << 1.0, 0.0, 0.0,
       0.0, 0.0, 0.0;
  const auto model = linear_model(w, {0.0, 40.0});
  AttackConfig cfg;
  cfg.theta = 0.3;
  cfg.gamma = 1.0 / 3.0;
  CHECK(jsma_attack(model, test::make_fv({0.85, 0.0, 0.0}), cfg).adversarial.values[0] == 1.0);
  CHECK(jsma_attack(model, test::make_fv({0.5, 0.0, 0.0}), cfg).adversarial.values[0] == doctest::Approx(0.8));
  cfg.variant = AttackVariant::binary;
  CHECK(jsma_attack(model, test::make_fv({0.0, 0.0, 0.0}), cfg).adversarial.values[0] == 1.0);
}

TEST_CASE("saturated features are skipped") {
  Eigen::MatrixXd w(2, 3);
  w << 1.0, 0.5, 0.0,
       0.0, 0.0, 0.0;
  const auto model = linear_model(w, {0.0, 40.0});
  AttackConfig cfg;
  cfg.gamma = 1.0;
  const auto r = jsma_attack(model, test::make_fv({1.0, 0.2, 1.0}), cfg);
  CHECK(r.modified_features == std::vector<std::size_t>{1});
  CHECK(r.adversarial.values == std::vector<double>{1.0, 0.2 + 0.1, 1.0});
}

TEST_CASE("stops as soon as the model is evaded") {
  Eigen::MatrixXd w(2, 4);
  w << 10.0, 8.0, 6.0, 4.0,
       0.0, 0.0, 0.0, 0.0;
  // logit gap starts at -1.5; each of the first two steps adds 1.0 then 0.8
  const auto model = linear_model(w, {0.0, 1.5});
  AttackConfig cfg;
  cfg.gamma = 1.0;
  const auto r = jsma_attack(model, test::make_fv({0.0, 0.0, 0.0, 0.0}), cfg);
  CHECK(r.evaded_source);
  CHECK(r.modified_features == std::vector<std::size_t>{0, 1});
  CHECK(model.predict_class(r.adversarial.view()) == Label::clean);
}

TEST_CASE("max_iters caps the loop below the budget") {
  const auto model = linear_model(Eigen::MatrixXd::Constant(2, 8, 0.0), {0.0, 5.0});
  AttackConfig cfg;
  cfg.gamma = 1.0;
  cfg.max_iters = 3;
  const auto r = jsma_attack(model, test::make_fv(std::vector<double>(8, 0.0)), cfg);
  CHECK(r.iterations == 3);
  CHECK(r.modified_features.size() == 3);
}

TEST_CASE("clean-classified input comes back unchanged") {
  const auto model = linear_model(Eigen::MatrixXd::Zero(2, 3), {3.0, 0.0});
  AttackConfig cfg;
  const auto x = test::make_fv({0.1, 0.2, 0.3}, Label::malware, "m1");
  cfg.gamma = 1.0;
  const auto r = jsma_attack(model, x, cfg);
  CHECK(r.adversarial.values == x.values);
  CHECK(r.modified_features.empty());
  CHECK(r.evaded_source);
  CHECK(r.adversarial.id == "m1");
}

TEST_CASE("budget and validation") {
  AttackConfig cfg;
  cfg.gamma = 0.025;
  CHECK(cfg.budget(491) == 12);
  cfg.gamma = 12.0 / 64.0;
  CHECK(cfg.budget(64) == 12);
  cfg.gamma = 0.1 * 3;  // 0.30000000000000004
  CHECK(cfg.budget(10) == 3);
  cfg.gamma = 0.7;  // 0.7 * 10 = 6.999999999999999
  CHECK(cfg.budget(10) == 7);

  cfg.gamma = 0.01;
  CHECK_THROWS_AS(cfg.validate(64), ConfigError);
  const auto model = test::random_model(64, {4}, 1);
  CHECK_THROWS_AS(jsma_attack(model, test::make_fv(std::vector<double>(64, 0.0)), cfg), ConfigError);
  cfg.gamma = 0.5;
  cfg.theta = 0.0;
  CHECK_THROWS_AS(cfg.validate(64), ConfigError);
  cfg.theta = 1.5;
  CHECK_THROWS_AS(cfg.validate(64), ConfigError);
  cfg.theta = 0.1;
  CHECK_THROWS_AS(jsma_attack(model, test::make_fv(std::vector<double>(10, 0.0)), cfg), ShapeError);
}

TEST_CASE("invariants hold on random models and inputs") {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = 4 + rng.index(20);
    const auto model = test::random_model(m, {8}, 900 + t);
    AttackConfig cfg;
    cfg.theta = rng.uniform(0.01, 1.0);
    cfg.gamma = rng.uniform(1.0 / static_cast<double>(m), 1.0);
    const auto x = test::make_fv(test::random_point(m, rng));
    for (const auto& r : {jsma_attack(model, x, cfg), random_addition_attack(model, x, cfg, t)}) {
      const auto violation = check_attack_invariants(r, cfg);
      CHECK_MESSAGE(!violation, violation.value_or(""));
      CHECK(r.modified_features.size() <= cfg.budget(m));
      auto sorted = r.modified_features;
      std::sort(sorted.begin(), sorted.end());
      CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    }
  }
}

TEST_CASE("invariant checker catches violations") {
  AttackConfig cfg;
  cfg.gamma = 0.5;
  AttackResult r{test::make_fv({0.5, 0.5, 0.5, 0.5}), test::make_fv({0.4, 0.5, 0.5, 0.5}), {0}, 1, false};
  CHECK(check_attack_invariants(r, cfg).has_value());
  r.adversarial.values = {0.6, 0.6, 0.6, 0.5};
  r.modified_features = {0, 1, 2};
  CHECK(check_attack_invariants(r, cfg).has_value());
  r.modified_features = {0, 1};
  CHECK(check_attack_invariants(r, cfg).has_value());
  r.adversarial.values = {0.6, 0.6, 0.5, 0.5};
  CHECK_FALSE(check_attack_invariants(r, cfg).has_value());
}

TEST_CASE("random addition is seeded") {
  const auto model = linear_model(Eigen::MatrixXd::Zero(2, 20), {0.0, 5.0});
  AttackConfig cfg;
  cfg.gamma = 0.25;
  const auto x = test::make_fv(std::vector<double>(20, 0.0));
  const auto a = random_addition_attack(model, x, cfg, 17);
  const auto b = random_addition_attack(model, x, cfg, 17);
  const auto c = random_addition_attack(model, x, cfg, 18);
  CHECK(a.modified_features == b.modified_features);
  CHECK(a.modified_features.size() == 5);
  CHECK(a.modified_features != c.modified_features);
}

TEST_CASE("binary transfer attack applies theta to the original counts") {
  Eigen::MatrixXd w(2, 4);
  w << 0.0, 2.0, 0.0, 1.0,
       0.0, 0.0, 0.0, 0.0;
  const auto binary_model = linear_model(w, {0.0, 40.0});
  AttackConfig cfg;
  cfg.theta = 0.1;
  cfg.gamma = 0.5;
  const auto x = test::make_fv({0.25, 0.0, 0.5, 0.95}, Label::malware, "b");
  const auto r = binary_transfer_attack(binary_model, x, cfg);
  // binarize(x) = {1, 0, 1, 1}: only feature 1 is eligible for the binary step
  // besides the saturated ones, then nothing else remains.
  CHECK(r.modified_features == std::vector<std::size_t>{1});
  CHECK(r.adversarial.values == std::vector<double>{0.25, 0.1, 0.5, 0.95});
  CHECK(r.original.values == x.values);
  CHECK_FALSE(check_attack_invariants(r, cfg).has_value());
}

TEST_CASE("repeat_single_api") {
  Eigen::MatrixXd w(2, 2);
  w << 0.0, 0.0,
       -3.0, 0.0;
  const auto model = linear_model(w, {0.0, 1.0});
  const auto x = test::make_fv({0.2, 0.4});
  const auto points = repeat_single_api(model, x, 0, 0.3, 5);
  REQUIRE(points.size() == 6);
  CHECK(points[0].k == 0);
  CHECK(points[0].p_malware == doctest::Approx(model.forward(x.values).malware));
  // 0.2 -> 0.5 -> 0.8 -> 1.0 (clipped) from k = 3 on
  const double p_at_one = 1.0 / (1.0 + std::exp(-(1.0 - 3.0)));
  CHECK(points[3].p_malware == doctest::Approx(p_at_one).epsilon(1e-12));
  CHECK(points[5].p_malware == points[3].p_malware);
  for (std::size_t k = 1; k < points.size(); ++k) CHECK(points[k].p_malware <= points[k - 1].p_malware);
  CHECK_THROWS_AS(repeat_single_api(model, x, 2, 0.1, 3), ConfigError);
  CHECK_THROWS_AS(repeat_single_api(model, x, 0, 0.0, 3), ConfigError);
}

TEST_CASE("repeating one API can flip a trained detector") {
  CorpusSpec spec;
  spec.n_clean = 300;
  spec.n_malware = 300;
  spec.m = 16;
  spec.profiles = default_profiles(16, 4);
  spec.overlap = 0.5;
  spec.seed = 6;
  const auto corpus = generate_corpus(spec);
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 32;
  tc.learning_rate = 0.003;
  tc.seed = 2;
  const auto model = fit_model(dense_architecture(16, std::vector<std::size_t>{32}), hard_label_set(corpus), tc).model;

  std::size_t flipped = 0;
  std::size_t detected = 0;
  for (const auto& x : with_label(corpus, Label::malware)) {
    if (model.predict_class(x.view()) != Label::malware) continue;
    ++detected;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const auto points = repeat_single_api(model, x, j, 0.1, 16);
      if (std::any_of(points.begin(), points.end(), [](const auto& p) { return p.p_malware < 0.5; })) {
        ++flipped;
        break;
      }
    }
  }
  REQUIRE(detected > 200);
  CHECK(flipped > 0);
}

TEST_CASE("attack results CSV") {
  AttackConfig cfg;
  cfg.theta = 0.1;
  cfg.gamma = 0.25;
  const std::vector<AttackResult> results{
      {test::make_fv({0, 0}, Label::malware, "a"), test::make_fv({0.1, 0.1}), {1, 0}, 2, true},
      {test::make_fv({0, 0}, Label::malware, "b"), test::make_fv({0, 0}), {}, 0, false}};
  CHECK(attack_results_csv(results, cfg) ==
        "id,evaded,theta,gamma,n_modified,modified_indices\n"
        "a,1,0.1,0.25,2,1;0\n"
        "b,0,0.1,0.25,0,\n");
}

}
