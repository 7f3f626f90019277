#include "evb/evalkit.hpp"

#include <cmath>
#include <sstream>

#include "evb/error.hpp"
#include "evb/numfmt.hpp"
#include "evb/rng.hpp"

namespace evb {
namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::optional<double> ConfusionStats::tpr() const { return ratio(tp, tp + fn); }
std::optional<double> ConfusionStats::tnr() const { return ratio(tn, tn + fp); }
std::optional<double> ConfusionStats::fpr() const { return ratio(fp, tn + fp); }
std::optional<double> ConfusionStats::fnr() const { return ratio(fn, tp + fn); }

ConfusionStats confusion(std::span<const Label> predictions, std::span<const Label> labels) {
  if (predictions.empty()) throw ConfigError("confusion statistics need at least one sample");
  if (predictions.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  ConfusionStats stats;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool predicted_malware = predictions[i] == Label::malware;
    if (labels[i] == Label::malware) {
      ++(predicted_malware ? stats.tp : stats.fn);
    } else {
      ++(predicted_malware ? stats.fp : stats.tn);
    }
  }
  return stats;
}

ClassifyFn classifier_of(const MlpModel& model) {
  return [&model](std::span<const double> x) { return model.predict_class(x); };
}

std::vector<Label> classify_all(const ClassifyFn& classify, std::span<const FeatureVector> samples) {
  std::vector<Label> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(classify(s.view()));
  return out;
}

ConfusionStats evaluate(const ClassifyFn& classify, std::span<const FeatureVector> labeled) {
  std::vector<Label> labels;
  labels.reserve(labeled.size());
  for (const auto& s : labeled) {
    if (!s.label) throw ConfigError("sample '" + s.id + "' has no label");
    labels.push_back(*s.label);
  }
  return confusion(classify_all(classify, labeled), labels);
}

double detection_rate(const ClassifyFn& classify, std::span<const FeatureVector> malware) {
  if (malware.empty()) throw ConfigError("detection rate of an empty set");
  std::size_t detected = 0;
  for (const auto& s : malware) detected += classify(s.view()) == Label::malware ? 1 : 0;
  return static_cast<double>(detected) / static_cast<double>(malware.size());
}

double transfer_rate(std::span<const FeatureVector> adversarial, const ClassifyFn& target) {
  return 1.0 - detection_rate(target, adversarial);
}

std::string_view to_string(SweepAxis axis) { return axis == SweepAxis::gamma ? "gamma" : "theta"; }

Crafter jsma_crafter(const MlpModel& model, AttackVariant variant) {
  return [&model, variant](const FeatureVector& x, const AttackConfig& cfg, std::uint64_t) {
    AttackConfig c = cfg;
    c.variant = variant;
    return jsma_attack(model, x, c);
  };
}

Crafter random_crafter(const MlpModel& model) {
  return [&model](const FeatureVector& x, const AttackConfig& cfg, std::uint64_t seed) {
    return random_addition_attack(model, x, cfg, seed);
  };
}

Crafter binary_transfer_crafter(const MlpModel& binary_model) {
  return [&binary_model](const FeatureVector& x, const AttackConfig& cfg, std::uint64_t) {
    return binary_transfer_attack(binary_model, x, cfg);
  };
}

SecurityCurve security_sweep(const Crafter& craft, const ClassifyFn& evaluator,
                             std::span<const FeatureVector> malware, SweepAxis axis,
                             std::span<const double> values, double fixed, std::uint64_t seed,
                             AttackVariant variant, std::vector<AttackResult>* crafted) {
  if (values.empty()) throw ConfigError("empty sweep");
  if (malware.empty()) throw ConfigError("sweep over an empty malware set");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] > values[i - 1])) throw ConfigError("sweep strengths must be strictly increasing");
  }
  const std::size_t m = malware.front().size();

  SecurityCurve curve{axis, fixed, {}};
  for (std::size_t p = 0; p < values.size(); ++p) {
    const double strength = values[p];
    AttackConfig cfg;
    cfg.variant = variant;
    cfg.theta = axis == SweepAxis::theta ? strength : fixed;
    cfg.gamma = axis == SweepAxis::gamma ? strength : fixed;
    const std::uint64_t point_seed = derive_seed(seed, p);
    const bool no_attack = !(cfg.theta > 0.0) || cfg.budget(m) == 0;
    if (!no_attack) cfg.validate(m);

    std::size_t detected = 0;
    for (std::size_t i = 0; i < malware.size(); ++i) {
      if (no_attack) {
        detected += evaluator(malware[i].view()) == Label::malware ? 1 : 0;
        continue;
      }
      AttackResult r = craft(malware[i], cfg, derive_seed(point_seed, i));
      detected += evaluator(r.adversarial.view()) == Label::malware ? 1 : 0;
      if (crafted) crafted->push_back(std::move(r));
    }
    curve.points.push_back({strength, static_cast<double>(detected) / static_cast<double>(malware.size()),
                            malware.size(), point_seed});
  }
  return curve;
}

std::string curve_csv(const SecurityCurve& curve, bool header) {
  std::ostringstream out;
  if (header) out << "axis,fixed_param,strength,detection_rate,n_samples,seed\n";
  for (const auto& p : curve.points) {
    out << to_string(curve.axis) << ',' << format_double(curve.fixed_value) << ',' << format_double(p.strength)
        << ',' << format_double(p.detection_rate) << ',' << p.n_samples << ',' << p.seed << '\n';
  }
  return out.str();
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("L2 distance between vectors of different length");
  double sum = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    sum += d * d;
  }
  return std::sqrt(sum);
}

L2Report l2_report(std::span<const FeatureVector> malware, std::span<const FeatureVector> adversarial,
                   std::span<const FeatureVector> clean, std::size_t pair_budget, std::uint64_t seed) {
  if (malware.empty() || clean.empty()) throw ConfigError("L2 report needs malware and clean samples");
  if (adversarial.size() != malware.size()) throw ConfigError("adversarial set is not paired 1:1 with malware");
  if (pair_budget == 0) throw ConfigError("pair budget must be positive");

  L2Report report;
  double paired = 0.0;
  for (std::size_t i = 0; i < malware.size(); ++i) {
    if (adversarial[i].id != malware[i].id) {
      throw ConfigError("adversarial sample '" + adversarial[i].id + "' is not paired with '" + malware[i].id + "'");
    }
    paired += l2_distance(malware[i].view(), adversarial[i].view());
  }
  report.mean_malware_adv = paired / static_cast<double>(malware.size());

  Rng rng(seed);
  double mal_clean = 0.0;
  double clean_adv = 0.0;
  for (std::size_t k = 0; k < pair_budget; ++k) {
    const auto& c = clean[rng.index(clean.size())];
    mal_clean += l2_distance(malware[rng.index(malware.size())].view(), c.view());
    const auto& c2 = clean[rng.index(clean.size())];
    clean_adv += l2_distance(c2.view(), adversarial[rng.index(adversarial.size())].view());
  }
  report.mean_malware_clean = mal_clean / static_cast<double>(pair_budget);
  report.mean_clean_adv = clean_adv / static_cast<double>(pair_budget);
  report.pair_sample_size = pair_budget;
  return report;
}

}  // namespace evb
