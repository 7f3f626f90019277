#pragma once

// Dense feed-forward two-class classifier with exact input Jacobians,
// temperature softmax and minibatch Adam training.

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evb/apilog.hpp"
#include "evb/label.hpp"

namespace evb {

enum class Activation { relu, identity, softmax_output };

std::string_view to_string(Activation activation);
Activation parse_activation(std::string_view text);

struct LayerSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  Activation activation = Activation::relu;

  bool operator==(const LayerSpec&) const = default;
};

// Hidden ReLU layers of the given widths followed by a 2-way softmax output.
std::vector<LayerSpec> dense_architecture(std::size_t input_dim, std::span<const std::size_t> hidden);

// Stand-in for the undisclosed production detector: input -> 800 -> 800 -> 2.
inline constexpr std::size_t kTargetHidden[] = {800, 800};
// Attacker's substitute: input -> 1200 -> 1500 -> 1300 -> 2.
inline constexpr std::size_t kSubstituteHidden[] = {1200, 1500, 1300};

struct ProbPair {
  double clean = 0.5;
  double malware = 0.5;

  double operator[](std::size_t cls) const { return cls == 0 ? clean : malware; }
  double of(Label label) const { return (*this)[class_index(label)]; }
};

// Row i holds dF_i/dx for class i (0 = clean, 1 = malware).
using InputJacobian = Eigen::Matrix<double, 2, Eigen::Dynamic>;

struct DenseLayer {
  LayerSpec spec;
  Eigen::MatrixXd weights;  // output_dim x input_dim
  Eigen::VectorXd bias;     // output_dim
};

class MlpModel {
 public:
  MlpModel() = default;

  // Zero weights and biases. Throws ConfigError when consecutive layer dims
  // disagree, the last layer is not a 2-way softmax output, or temperature <= 0.
  explicit MlpModel(std::vector<LayerSpec> layers, double temperature = 1.0);

  // Weights uniform in +-sqrt(6 / fan_in), biases zero.
  static MlpModel he_uniform(std::vector<LayerSpec> layers, std::uint64_t seed,
                             double temperature = 1.0);

  std::size_t input_dim() const;
  std::size_t num_layers() const { return layers_.size(); }
  std::vector<LayerSpec> layer_specs() const;

  const DenseLayer& layer(std::size_t index) const { return layers_.at(index); }
  // Replaces one layer's parameters; throws ShapeError on mismatched shapes.
  void set_parameters(std::size_t index, Eigen::MatrixXd weights, Eigen::VectorXd bias);

  double temperature() const { return temperature_; }
  void set_temperature(double temperature);

  Eigen::Vector2d logits(std::span<const double> x) const;
  ProbPair forward(std::span<const double> x) const;
  InputJacobian input_jacobian(std::span<const double> x) const;
  // argmax of forward; an exact 0.5/0.5 tie resolves to malware.
  Label predict_class(std::span<const double> x) const;

  // Throws NumericError if any parameter is NaN or infinite.
  void check_finite() const;

  bool operator==(const MlpModel& other) const;

 private:
  std::vector<DenseLayer> layers_;
  double temperature_ = 1.0;
};

// Softmax of logits / temperature with max subtraction.
ProbPair softmax_pair(const Eigen::Vector2d& logits, double temperature);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 256;
  double learning_rate = 0.001;
  std::uint64_t seed = 0;
  AdamConfig adam;

  void validate() const;
};

// Inputs are one sample per row; targets are (p_clean, p_malware) per row.
struct TrainingSet {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

Eigen::MatrixXd feature_matrix(std::span<const FeatureVector> samples);
// One-hot targets. Throws ConfigError for unlabeled samples.
TrainingSet hard_label_set(std::span<const FeatureVector> samples);
TrainingSet hard_label_set(Eigen::MatrixXd inputs, std::span<const Label> labels);
// Probability-pair targets; each pair must sum to 1.
TrainingSet soft_label_set(Eigen::MatrixXd inputs, std::span<const ProbPair> targets);

struct TrainResult {
  MlpModel model;
  std::vector<double> loss_history;  // mean cross-entropy per epoch
};

// Minibatch Adam on softmax cross-entropy at the model's temperature.
// Deterministic in cfg.seed (shuffle order); initial weights come from `init`.
TrainResult train(const MlpModel& init, const TrainingSet& data, const TrainConfig& cfg);

// He-uniform init from a seed derived from cfg.seed, then train().
TrainResult fit_model(std::vector<LayerSpec> architecture, const TrainingSet& data,
                      const TrainConfig& cfg, double temperature = 1.0);

std::string serialize_model(const MlpModel& model);
MlpModel deserialize_model(std::string_view json_text);

}  // namespace evb
