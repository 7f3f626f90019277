#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evb/apilog.hpp"
#include "evb/rng.hpp"
#include "evb/tensornet.hpp"

namespace evb::test {

inline FeatureVector make_fv(std::vector<double> values, std::optional<Label> label = Label::malware,
                             std::string id = "s") {
  return FeatureVector{std::move(id), label, std::move(values)};
}

inline std::vector<double> random_point(std::size_t m, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<double> x(m);
  for (auto& v : x) v = rng.uniform(lo, hi);
  return x;
}

// He-uniform weights plus small random biases so no unit starts exactly at a
// ReLU kink by construction.
inline MlpModel random_model(std::size_t input_dim, std::vector<std::size_t> hidden, std::uint64_t seed,
                             double temperature = 1.0) {
  MlpModel model = MlpModel::he_uniform(dense_architecture(input_dim, hidden), seed, temperature);
  Rng rng(derive_seed(seed, 99));
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto& layer = model.layer(l);
    Eigen::VectorXd bias(layer.bias.size());
    for (auto& b : bias) b = rng.uniform(-0.5, 0.5);
    model.set_parameters(l, layer.weights, bias);
  }
  return model;
}

}  // namespace evb::test
