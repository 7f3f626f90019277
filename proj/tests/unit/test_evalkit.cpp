#include <doctest.h>

#include <cmath>

#include "evb/error.hpp"
#include "evb/evalkit.hpp"
#include "evb/numfmt.hpp"
#include "support.hpp"

using namespace evb;

namespace {

// Classifies malware iff the first feature is at least `cut`.
ClassifyFn threshold_classifier(double cut) {
  return [cut](std::span<const double> x) { return x[0] >= cut ? Label::malware : Label::clean; };
}

}  // namespace

TEST_SUITE("evalkit") {

TEST_CASE("confusion counts and rates") {
  using enum Label;
  const std::vector<Label> all_malware(5, malware);
  const auto s = confusion(all_malware, all_malware);
  CHECK(s.tp == 5);
  CHECK(s.tpr() == 1.0);
  CHECK_FALSE(s.tnr().has_value());
  CHECK(format_rate(s.tnr()) == "nan");

  std::vector<Label> predicted(10, malware);
  for (std::size_t i = 0; i < 3; ++i) predicted[i] = clean;
  const auto t = confusion(predicted, std::vector<Label>(10, malware));
  CHECK(t.tp == 7);
  CHECK(t.fn == 3);
  CHECK(*t.tpr() == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(*t.fnr() == doctest::Approx(0.3).epsilon(1e-15));

  const std::vector<Label> p{clean, malware, malware, clean};
  const std::vector<Label> y{clean, clean, malware, malware};
  const auto u = confusion(p, y);
  CHECK(u.tp == 1);
  CHECK(u.tn == 1);
  CHECK(u.fp == 1);
  CHECK(u.fn == 1);
  CHECK(*u.fpr() + *u.tnr() == 1.0);

  CHECK_THROWS_AS(confusion({}, {}), ConfigError);
  CHECK_THROWS_AS(confusion(p, std::span(y).first(3)), ShapeError);
}

TEST_CASE("evaluate needs labels") {
  const std::vector<FeatureVector> data{test::make_fv({0.9}, Label::malware), test::make_fv({0.1}, Label::clean),
                                        test::make_fv({0.6}, Label::clean)};
  const auto s = evaluate(threshold_classifier(0.5), data);
  CHECK(s.tp == 1);
  CHECK(s.tn == 1);
  CHECK(s.fp == 1);
  const std::vector<FeatureVector> unlabeled{test::make_fv({0.9}, std::nullopt)};
  CHECK_THROWS_AS(evaluate(threshold_classifier(0.5), unlabeled), ConfigError);
}

TEST_CASE("transfer rate complements detection rate") {
  Rng rng(1);
  std::vector<FeatureVector> set;
  for (int i = 0; i < 37; ++i) set.push_back(test::make_fv({rng.uniform01()}));
  for (double cut : {0.0, 0.3, 0.5, 0.9, 1.1}) {
    const auto c = threshold_classifier(cut);
    CHECK(transfer_rate(set, c) + detection_rate(c, set) == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(transfer_rate(set, threshold_classifier(0.0)) == 0.0);
  CHECK_THROWS_AS(detection_rate(threshold_classifier(0.5), {}), ConfigError);
}

TEST_CASE("security sweep") {
  const auto model = test::random_model(8, {6}, 11);
  const auto cls = classifier_of(model);
  Rng rng(12);
  std::vector<FeatureVector> mal;
  for (int i = 0; i < 40; ++i) mal.push_back(test::make_fv(test::random_point(8, rng), Label::malware, "m" + std::to_string(i)));
  const double baseline = detection_rate(cls, mal);

  const std::vector<double> grid{0.0, 0.125, 0.25, 0.5};
  std::vector<AttackResult> crafted;
  const auto curve = security_sweep(jsma_crafter(model), cls, mal, SweepAxis::gamma, grid, 0.2, 99,
                                    AttackVariant::continuous, &crafted);
  REQUIRE(curve.points.size() == 4);
  CHECK(curve.points[0].detection_rate == baseline);
  CHECK(crafted.size() == 3 * mal.size());
  for (std::size_t p = 0; p < grid.size(); ++p) {
    CHECK(curve.points[p].strength == grid[p]);
    CHECK(curve.points[p].n_samples == 40);
    CHECK(curve.points[p].seed == derive_seed(99, p));
  }
  // Each point is an independent attack at that budget.
  AttackConfig cfg;
  cfg.theta = 0.2;
  cfg.gamma = 0.25;
  std::vector<FeatureVector> adv;
  for (const auto& x : mal) adv.push_back(jsma_attack(model, x, cfg).adversarial);
  CHECK(curve.points[2].detection_rate == detection_rate(cls, adv));
  // JSMA always stops on evasion, so more budget never helps the detector.
  for (std::size_t p = 1; p < grid.size(); ++p) {
    CHECK(curve.points[p].detection_rate <= curve.points[p - 1].detection_rate);
  }

  const auto theta_curve = security_sweep(jsma_crafter(model), cls, mal, SweepAxis::theta,
                                          std::vector<double>{0.0, 0.1}, 0.25, 5);
  CHECK(theta_curve.points[0].detection_rate == baseline);
  CHECK(theta_curve.fixed_value == 0.25);

  CHECK_THROWS_AS(security_sweep(jsma_crafter(model), cls, mal, SweepAxis::gamma, {}, 0.1, 1), ConfigError);
  CHECK_THROWS_AS(security_sweep(jsma_crafter(model), cls, {}, SweepAxis::gamma, grid, 0.1, 1), ConfigError);
  CHECK_THROWS_AS(security_sweep(jsma_crafter(model), cls, mal, SweepAxis::gamma, std::vector<double>{0.5, 0.25},
                                 0.1, 1),
                  ConfigError);
}

TEST_CASE("random crafter is reproducible through the sweep seed") {
  const auto model = test::random_model(10, {6}, 13);
  Rng rng(3);
  std::vector<FeatureVector> mal;
  for (int i = 0; i < 20; ++i) mal.push_back(test::make_fv(test::random_point(10, rng)));
  const std::vector<double> grid{0.2, 0.4};
  std::vector<AttackResult> a;
  std::vector<AttackResult> b;
  security_sweep(random_crafter(model), classifier_of(model), mal, SweepAxis::gamma, grid, 0.1, 7,
                 AttackVariant::continuous, &a);
  security_sweep(random_crafter(model), classifier_of(model), mal, SweepAxis::gamma, grid, 0.1, 7,
                 AttackVariant::continuous, &b);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].modified_features == b[i].modified_features);
}

TEST_CASE("curve CSV") {
  SecurityCurve c{SweepAxis::gamma, 0.1, {{0.0, 1.0, 5, 42}, {0.25, 0.4, 5, 43}}};
  CHECK(curve_csv(c) ==
        "axis,fixed_param,strength,detection_rate,n_samples,seed\n"
        "gamma,0.1,0,1,5,42\n"
        "gamma,0.1,0.25,0.4,5,43\n");
  CHECK(curve_csv(c, false).rfind("gamma,", 0) == 0);
}

TEST_CASE("L2 distances") {
  CHECK(l2_distance(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == 5.0);
  CHECK_THROWS_AS(l2_distance(std::vector<double>{0}, std::vector<double>{3, 4}), ShapeError);

  // n features each raised by theta: paired distance theta * sqrt(n).
  const double theta = 0.1;
  std::vector<FeatureVector> mal;
  std::vector<FeatureVector> adv;
  for (std::size_t n = 1; n <= 5; ++n) {
    std::vector<double> x(8, 0.2);
    auto y = x;
    for (std::size_t j = 0; j < n; ++j) y[j] += theta;
    mal.push_back(test::make_fv(x, Label::malware, "m" + std::to_string(n)));
    adv.push_back(test::make_fv(y, Label::malware, "m" + std::to_string(n)));
  }
  const std::vector<FeatureVector> clean{test::make_fv(std::vector<double>(8, 0.0), Label::clean)};
  const auto r = l2_report(mal, adv, clean, 1000, 1);
  double expected = 0.0;
  for (std::size_t n = 1; n <= 5; ++n) expected += theta * std::sqrt(static_cast<double>(n));
  CHECK(r.mean_malware_adv == doctest::Approx(expected / 5.0).epsilon(1e-12));
  // All malware is identical, so every malware-clean pair is 0.2 * sqrt(8).
  CHECK(r.mean_malware_clean == doctest::Approx(0.2 * std::sqrt(8.0)).epsilon(1e-12));
  CHECK(r.mean_clean_adv > r.mean_malware_clean);
  CHECK(r.pair_sample_size == 1000);
  CHECK(l2_report(mal, adv, clean, 1000, 1).mean_clean_adv == r.mean_clean_adv);

  auto swapped = adv;
  std::swap(swapped[0], swapped[1]);
  CHECK_THROWS_AS(l2_report(mal, swapped, clean, 10, 1), ConfigError);
  CHECK_THROWS_AS(l2_report(mal, std::span(adv).first(2), clean, 10, 1), ConfigError);
  CHECK_THROWS_AS(l2_report(mal, adv, {}, 10, 1), ConfigError);
  CHECK_THROWS_AS(l2_report(mal, adv, clean, 0, 1), ConfigError);
}

}
