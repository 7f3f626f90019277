#pragma once

// Attack and defense metrics: confusion statistics, detection and transfer
// rates, security evaluation curves and L2 geometry of adversarial examples.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evb/apilog.hpp"
#include "evb/jsma.hpp"
#include "evb/label.hpp"

namespace evb {

// Positive class is malware. Rates with a zero denominator are nullopt.
struct ConfusionStats {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::optional<double> tpr() const;
  std::optional<double> tnr() const;
  std::optional<double> fpr() const;
  std::optional<double> fnr() const;
};

// Throws ConfigError on empty input and ShapeError on length mismatch.
ConfusionStats confusion(std::span<const Label> predictions, std::span<const Label> labels);

// Anything that labels a feature vector: a bare model, a PCA pipeline, a
// squeeze-guarded model, ...
using ClassifyFn = std::function<Label(std::span<const double>)>;

ClassifyFn classifier_of(const MlpModel& model);

std::vector<Label> classify_all(const ClassifyFn& classify, std::span<const FeatureVector> samples);

// Confusion statistics of a classifier over a labeled set.
ConfusionStats evaluate(const ClassifyFn& classify, std::span<const FeatureVector> labeled);

// Fraction classified malware. Throws ConfigError on an empty set.
double detection_rate(const ClassifyFn& classify, std::span<const FeatureVector> malware);

// 1 - detection rate of the target on a set crafted against another model.
double transfer_rate(std::span<const FeatureVector> adversarial, const ClassifyFn& target);

enum class SweepAxis { gamma, theta };
std::string_view to_string(SweepAxis axis);

struct CurvePoint {
  double strength = 0.0;
  double detection_rate = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

struct SecurityCurve {
  SweepAxis axis = SweepAxis::gamma;
  double fixed_value = 0.0;  // theta for a gamma sweep, gamma for a theta sweep
  std::vector<CurvePoint> points;
};

// Crafts one adversarial example in the evaluator's feature space. The seed is
// derived per sweep point and per sample.
using Crafter = std::function<AttackResult(const FeatureVector&, const AttackConfig&, std::uint64_t seed)>;

Crafter jsma_crafter(const MlpModel& model, AttackVariant variant = AttackVariant::continuous);
Crafter random_crafter(const MlpModel& model);
Crafter binary_transfer_crafter(const MlpModel& binary_model);

// Runs the attack at each strength and measures the evaluator's detection rate
// on the results. A point whose configuration is empty (gamma budget 0 or
// theta 0) is scored on the unmodified set. Every crafted result is appended
// to `crafted` when it is non-null.
SecurityCurve security_sweep(const Crafter& craft, const ClassifyFn& evaluator,
                             std::span<const FeatureVector> malware, SweepAxis axis,
                             std::span<const double> values, double fixed, std::uint64_t seed,
                             AttackVariant variant = AttackVariant::continuous,
                             std::vector<AttackResult>* crafted = nullptr);

// `axis,fixed_param,strength,detection_rate,n_samples,seed`
std::string curve_csv(const SecurityCurve& curve, bool header = true);

struct L2Report {
  double mean_malware_adv = 0.0;    // paired by id
  double mean_malware_clean = 0.0;  // sampled cross pairs
  double mean_clean_adv = 0.0;      // sampled cross pairs
  std::size_t pair_sample_size = 0;
};

inline constexpr std::size_t kDefaultPairBudget = 100000;

double l2_distance(std::span<const double> a, std::span<const double> b);

// adversarial[i] must carry the id of malware[i]; throws ConfigError otherwise.
L2Report l2_report(std::span<const FeatureVector> malware, std::span<const FeatureVector> adversarial,
                   std::span<const FeatureVector> clean, std::size_t pair_budget, std::uint64_t seed);

}  // namespace evb
