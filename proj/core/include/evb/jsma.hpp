#pragma once

// Jacobian-saliency evasion attack toward the clean class under an add-only
// constraint: features may only grow, each at most once per attack.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evb/apilog.hpp"
#include "evb/tensornet.hpp"

namespace evb {

enum class AttackVariant {
  continuous,  // selected feature <- min(value + theta, 1)
  binary,      // selected feature <- 1
};

std::string_view to_string(AttackVariant variant);

struct AttackConfig {
  double theta = 0.1;   // magnitude added per selected feature, in (0, 1]
  double gamma = 0.025; // maximum fraction of features modified, in (0, 1]
  AttackVariant variant = AttackVariant::continuous;
  std::optional<std::size_t> max_iters;  // defaults to the feature budget

  // floor(gamma * m), computed robustly against representation error.
  std::size_t budget(std::size_t m) const;
  std::size_t iteration_limit(std::size_t m) const;
  // Throws ConfigError for theta/gamma outside (0, 1] or an empty budget.
  void validate(std::size_t m) const;
};

struct AttackResult {
  FeatureVector original;
  FeatureVector adversarial;
  std::vector<std::size_t> modified_features;  // in selection order
  std::size_t iterations = 0;
  bool evaded_source = false;  // the attacked model labels the result clean
};

// Features at or above this value cannot be increased any further.
inline constexpr double kSaturationLevel = 1.0 - 1e-12;

// score[j] = J[0][j] - J[1][j]: the saliency toward the clean class.
std::vector<double> saliency_scores(const MlpModel& model, std::span<const double> x);

// Greedy saliency loop. Stops on evasion, on an exhausted budget, when
// max_iters is reached or when no eligible feature remains. Score ties go to
// the lowest index. Samples already classified clean come back unchanged.
AttackResult jsma_attack(const MlpModel& model, const FeatureVector& x, const AttackConfig& cfg);

// Same loop and stopping rules, but the feature is drawn uniformly from the
// eligible set.
AttackResult random_addition_attack(const MlpModel& model, const FeatureVector& x,
                                    const AttackConfig& cfg, std::uint64_t seed);

// Grey-box attack by an adversary who only sees API presence: runs the binary
// variant against `binary_model` on binarize(x), then raises each selected
// feature of the original count vector by theta (clipped at 1). evaded_source
// reports whether the binary model was fooled.
AttackResult binary_transfer_attack(const MlpModel& binary_model, const FeatureVector& x,
                                    const AttackConfig& cfg);

struct EscalationPoint {
  std::size_t k = 0;
  double p_malware = 0.0;
};

// Confidence after adding theta to one feature k = 0..k_max times (clipped at 1).
std::vector<EscalationPoint> repeat_single_api(const MlpModel& model, const FeatureVector& x,
                                               std::size_t feature_index, double theta,
                                               std::size_t k_max);

// Describes the first violated invariant (add-only, budget, range, length), if any.
std::optional<std::string> check_attack_invariants(const AttackResult& result, const AttackConfig& cfg);

// `id,evaded,theta,gamma,n_modified,modified_indices` with ';'-joined indices.
std::string attack_results_csv(std::span<const AttackResult> results, const AttackConfig& cfg);

}  // namespace evb
