#include "evb/jsma.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evb/error.hpp"
#include "evb/numfmt.hpp"
#include "evb/rng.hpp"

namespace evb {
namespace {

void apply_step(std::vector<double>& values, std::size_t j, const AttackConfig& cfg) {
  values[j] = cfg.variant == AttackVariant::binary ? 1.0 : std::min(values[j] + cfg.theta, 1.0);
}

// Shared greedy loop; `choose` picks the next feature among eligible ones.
template <typename Choose>
AttackResult run_attack(const MlpModel& model, const FeatureVector& x, const AttackConfig& cfg,
                        Choose&& choose) {
  const std::size_t m = x.size();
  if (m != model.input_dim()) {
    throw ShapeError("sample '" + x.id + "' has length " + std::to_string(m) + ", model expects " +
                     std::to_string(model.input_dim()));
  }
  cfg.validate(m);

  AttackResult result{x, x, {}, 0, false};
  if (model.predict_class(x.view()) == Label::clean) {
    result.evaded_source = true;
    return result;
  }

  const std::size_t budget = cfg.budget(m);
  const std::size_t limit = cfg.iteration_limit(m);
  std::vector<bool> modified(m, false);
  auto& values = result.adversarial.values;

  while (result.modified_features.size() < budget && result.iterations < limit) {
    std::vector<std::size_t> eligible;
    for (std::size_t j = 0; j < m; ++j) {
      if (!modified[j] && values[j] < kSaturationLevel) eligible.push_back(j);
    }
    if (eligible.empty()) break;

    const std::size_t j = choose(values, eligible);
    apply_step(values, j, cfg);
    modified[j] = true;
    result.modified_features.push_back(j);
    ++result.iterations;

    if (model.predict_class(values) == Label::clean) {
      result.evaded_source = true;
      break;
    }
  }
  return result;
}

}  // namespace

std::string_view to_string(AttackVariant variant) {
  return variant == AttackVariant::binary ? "binary" : "continuous";
}

std::size_t AttackConfig::budget(std::size_t m) const {
  if (!(gamma > 0.0)) return 0;
  return static_cast<std::size_t>(std::floor(gamma * static_cast<double>(m) + 1e-9));
}

std::size_t AttackConfig::iteration_limit(std::size_t m) const {
  return max_iters.value_or(budget(m));
}

void AttackConfig::validate(std::size_t m) const {
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in (0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (budget(m) < 1) {
    throw ConfigError("feature budget floor(gamma * M) is zero for gamma=" + format_double(gamma) +
                      ", M=" + std::to_string(m));
  }
  if (max_iters && *max_iters == 0) throw ConfigError("max_iters must be positive");
}

std::vector<double> saliency_scores(const MlpModel& model, std::span<const double> x) {
  const InputJacobian jac = model.input_jacobian(x);
  std::vector<double> scores(static_cast<std::size_t>(jac.cols()));
  for (Eigen::Index j = 0; j < jac.cols(); ++j) scores[static_cast<std::size_t>(j)] = jac(0, j) - jac(1, j);
  return scores;
}

AttackResult jsma_attack(const MlpModel& model, const FeatureVector& x, const AttackConfig& cfg) {
  return run_attack(model, x, cfg, [&](const std::vector<double>& values, const std::vector<std::size_t>& eligible) {
    const auto scores = saliency_scores(model, values);
    std::size_t best = eligible.front();
    for (std::size_t j : eligible) {
      if (scores[j] > scores[best]) best = j;  // strict: ties keep the lower index
    }
    return best;
  });
}

AttackResult random_addition_attack(const MlpModel& model, const FeatureVector& x,
                                    const AttackConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return run_attack(model, x, cfg, [&](const std::vector<double>&, const std::vector<std::size_t>& eligible) {
    return eligible[rng.index(eligible.size())];
  });
}

AttackResult binary_transfer_attack(const MlpModel& binary_model, const FeatureVector& x,
                                    const AttackConfig& cfg) {
  AttackConfig binary_cfg = cfg;
  binary_cfg.variant = AttackVariant::binary;
  const AttackResult crafted = jsma_attack(binary_model, binarize(x), binary_cfg);

  AttackResult out{x, x, crafted.modified_features, crafted.iterations, crafted.evaded_source};
  for (std::size_t j : crafted.modified_features) {
    out.adversarial.values[j] = std::min(x.values[j] + cfg.theta, 1.0);
  }
  return out;
}

std::vector<EscalationPoint> repeat_single_api(const MlpModel& model, const FeatureVector& x,
                                               std::size_t feature_index, double theta,
                                               std::size_t k_max) {
  if (feature_index >= x.size()) {
    throw ConfigError("feature index " + std::to_string(feature_index) + " out of range");
  }
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in (0, 1]");
  std::vector<EscalationPoint> points;
  points.reserve(k_max + 1);
  std::vector<double> values = x.values;
  for (std::size_t k = 0; k <= k_max; ++k) {
    if (k > 0) values[feature_index] = std::min(values[feature_index] + theta, 1.0);
    points.push_back({k, model.forward(values).malware});
  }
  return points;
}

std::optional<std::string> check_attack_invariants(const AttackResult& result, const AttackConfig& cfg) {
  const auto& before = result.original.values;
  const auto& after = result.adversarial.values;
  if (before.size() != after.size()) return "length changed";
  for (std::size_t j = 0; j < before.size(); ++j) {
    if (after[j] < before[j]) return "feature " + std::to_string(j) + " decreased";
    if (!(after[j] >= 0.0 && after[j] <= 1.0)) return "feature " + std::to_string(j) + " left [0,1]";
  }
  const std::size_t budget = cfg.budget(before.size());
  if (result.modified_features.size() > budget) {
    return "modified " + std::to_string(result.modified_features.size()) + " features, budget " +
           std::to_string(budget);
  }
  std::size_t changed = 0;
  for (std::size_t j = 0; j < before.size(); ++j) changed += after[j] != before[j] ? 1 : 0;
  if (changed > budget) return "changed " + std::to_string(changed) + " coordinates, budget " + std::to_string(budget);
  return std::nullopt;
}

std::string attack_results_csv(std::span<const AttackResult> results, const AttackConfig& cfg) {
  std::ostringstream out;
  out << "id,evaded,theta,gamma,n_modified,modified_indices\n";
  for (const auto& r : results) {
    out << r.original.id << ',' << (r.evaded_source ? 1 : 0) << ',' << format_double(cfg.theta) << ','
        << format_double(cfg.gamma) << ',' << r.modified_features.size() << ',';
    for (std::size_t i = 0; i < r.modified_features.size(); ++i) {
      if (i > 0) out << ';';
      out << r.modified_features[i];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace evb
