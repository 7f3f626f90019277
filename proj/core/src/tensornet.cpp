#include "evb/tensornet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "evb/error.hpp"
#include "evb/rng.hpp"

namespace evb {
namespace {

constexpr int kModelSchemaVersion = 1;

void validate_architecture(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) throw ConfigError("model needs at least one layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& spec = layers[i];
    if (spec.input_dim == 0 || spec.output_dim == 0) {
      throw ConfigError("layer " + std::to_string(i) + " has a zero dimension");
    }
    if (i > 0 && layers[i - 1].output_dim != spec.input_dim) {
      throw ConfigError("layer " + std::to_string(i) + " input_dim does not match previous output_dim");
    }
    const bool last = i + 1 == layers.size();
    if (last != (spec.activation == Activation::softmax_output)) {
      throw ConfigError("softmax-output must be the final layer and only the final layer");
    }
  }
  if (layers.back().output_dim != 2) throw ConfigError("final layer must have 2 outputs");
}

void check_matrix_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite value in ") + what);
}

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> x) {
  return {x.data(), static_cast<Eigen::Index>(x.size())};
}

}  // namespace

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::softmax_output: return "softmax-output";
  }
  return "relu";
}

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::relu;
  if (text == "identity") return Activation::identity;
  if (text == "softmax-output") return Activation::softmax_output;
  throw FormatError("unknown activation '" + std::string(text) + "'");
}

std::vector<LayerSpec> dense_architecture(std::size_t input_dim, std::span<const std::size_t> hidden) {
  std::vector<LayerSpec> layers;
  std::size_t in = input_dim;
  for (std::size_t width : hidden) {
    layers.push_back({in, width, Activation::relu});
    in = width;
  }
  layers.push_back({in, 2, Activation::softmax_output});
  return layers;
}

MlpModel::MlpModel(std::vector<LayerSpec> layers, double temperature) {
  validate_architecture(layers);
  set_temperature(temperature);
  layers_.reserve(layers.size());
  for (const auto& spec : layers) {
    const auto out = static_cast<Eigen::Index>(spec.output_dim);
    const auto in = static_cast<Eigen::Index>(spec.input_dim);
    layers_.push_back({spec, Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
}

MlpModel MlpModel::he_uniform(std::vector<LayerSpec> layers, std::uint64_t seed, double temperature) {
  MlpModel model(std::move(layers), temperature);
  Rng rng(seed);
  for (auto& layer : model.layers_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.spec.input_dim));
    // Row-major fill order so the draw sequence is independent of Eigen's storage order.
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = rng.uniform(-bound, bound);
    }
  }
  return model;
}

std::size_t MlpModel::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().spec.input_dim;
}

std::vector<LayerSpec> MlpModel::layer_specs() const {
  std::vector<LayerSpec> specs;
  specs.reserve(layers_.size());
  for (const auto& layer : layers_) specs.push_back(layer.spec);
  return specs;
}

void MlpModel::set_parameters(std::size_t index, Eigen::MatrixXd weights, Eigen::VectorXd bias) {
  auto& layer = layers_.at(index);
  if (weights.rows() != layer.weights.rows() || weights.cols() != layer.weights.cols() ||
      bias.size() != layer.bias.size()) {
    throw ShapeError("parameter shape mismatch for layer " + std::to_string(index));
  }
  layer.weights = std::move(weights);
  layer.bias = std::move(bias);
}

void MlpModel::set_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be a positive finite number");
  }
  temperature_ = temperature;
}

Eigen::Vector2d MlpModel::logits(std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw ShapeError("input has length " + std::to_string(x.size()) + ", model expects " +
                     std::to_string(input_dim()));
  }
  Eigen::VectorXd activation = as_vector(x);
  for (const auto& layer : layers_) {
    Eigen::VectorXd z = layer.weights * activation + layer.bias;
    if (layer.spec.activation == Activation::relu) z = z.cwiseMax(0.0);
    activation = std::move(z);
  }
  if (!activation.allFinite()) throw NumericError("non-finite logits");
  return activation;
}

ProbPair softmax_pair(const Eigen::Vector2d& logits, double temperature) {
  const double a = logits[0] / temperature;
  const double b = logits[1] / temperature;
  const double top = std::max(a, b);
  const double ea = std::exp(a - top);
  const double eb = std::exp(b - top);
  const double total = ea + eb;
  return {ea / total, eb / total};
}

ProbPair MlpModel::forward(std::span<const double> x) const { return softmax_pair(logits(x), temperature_); }

Label MlpModel::predict_class(std::span<const double> x) const {
  const auto p = forward(x);
  return p.clean > p.malware ? Label::clean : Label::malware;
}

InputJacobian MlpModel::input_jacobian(std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw ShapeError("input has length " + std::to_string(x.size()) + ", model expects " +
                     std::to_string(input_dim()));
  }
  // Forward pass keeping the ReLU masks.
  std::vector<Eigen::Array<bool, Eigen::Dynamic, 1>> masks;
  masks.reserve(layers_.size());
  Eigen::VectorXd activation = as_vector(x);
  for (const auto& layer : layers_) {
    Eigen::VectorXd z = layer.weights * activation + layer.bias;
    if (layer.spec.activation == Activation::relu) {
      masks.push_back(z.array() > 0.0);
      z = z.cwiseMax(0.0);
    } else {
      masks.emplace_back();
    }
    activation = std::move(z);
  }
  if (!activation.allFinite()) throw NumericError("non-finite logits in Jacobian forward pass");

  // dp_i/dz_k = p_i (delta_ik - p_k) / T; for two classes every entry is +-p0 p1 / T.
  const auto p = softmax_pair(activation, temperature_);
  const double s = p.clean * p.malware / temperature_;
  Eigen::MatrixXd grad(2, 2);
  grad << s, -s, -s, s;

  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    if (layer.spec.activation == Activation::relu) {
      for (Eigen::Index k = 0; k < grad.cols(); ++k) {
        if (!masks[l][k]) grad.col(k).setZero();
      }
    }
    grad = grad * layer.weights;
  }
  if (!grad.allFinite()) throw NumericError("non-finite value in input Jacobian");
  return grad;
}

void MlpModel::check_finite() const {
  for (const auto& layer : layers_) {
    check_matrix_finite(layer.weights, "weights");
    check_matrix_finite(layer.bias, "biases");
  }
}

bool MlpModel::operator==(const MlpModel& other) const {
  if (temperature_ != other.temperature_ || layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.spec != b.spec || a.weights != b.weights || a.bias != b.bias) return false;
  }
  return true;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.epsilon > 0.0)) {
    throw ConfigError("invalid Adam constants");
  }
}

Eigen::MatrixXd feature_matrix(std::span<const FeatureVector> samples) {
  if (samples.empty()) return {};
  const auto cols = static_cast<Eigen::Index>(samples.front().size());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(samples.size()), cols);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (static_cast<Eigen::Index>(samples[i].size()) != cols) {
      throw ShapeError("ragged feature set at sample '" + samples[i].id + "'");
    }
    out.row(static_cast<Eigen::Index>(i)) = as_vector(samples[i].view()).transpose();
  }
  return out;
}

TrainingSet hard_label_set(Eigen::MatrixXd inputs, std::span<const Label> labels) {
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw ShapeError("inputs and labels differ in length");
  }
  TrainingSet set{std::move(inputs), Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), 2)};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    set.targets(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(class_index(labels[i]))) = 1.0;
  }
  return set;
}

TrainingSet hard_label_set(std::span<const FeatureVector> samples) {
  std::vector<Label> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.label) throw ConfigError("training sample '" + s.id + "' has no label");
    labels.push_back(*s.label);
  }
  return hard_label_set(feature_matrix(samples), labels);
}

TrainingSet soft_label_set(Eigen::MatrixXd inputs, std::span<const ProbPair> targets) {
  if (static_cast<std::size_t>(inputs.rows()) != targets.size()) {
    throw ShapeError("inputs and soft labels differ in length");
  }
  TrainingSet set{std::move(inputs), Eigen::MatrixXd(static_cast<Eigen::Index>(targets.size()), 2)};
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    if (!(t.clean >= 0.0 && t.malware >= 0.0) || std::abs(t.clean + t.malware - 1.0) > 1e-9) {
      throw ConfigError("soft label " + std::to_string(i) + " is not a probability pair");
    }
    set.targets(static_cast<Eigen::Index>(i), 0) = t.clean;
    set.targets(static_cast<Eigen::Index>(i), 1) = t.malware;
  }
  return set;
}

TrainResult train(const MlpModel& init, const TrainingSet& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw ConfigError("training set is empty");
  if (static_cast<std::size_t>(data.inputs.cols()) != init.input_dim()) {
    throw ShapeError("training inputs do not match the model input dimension");
  }
  if (data.targets.rows() != data.inputs.rows() || data.targets.cols() != 2) {
    throw ShapeError("training targets must be an n x 2 matrix");
  }
  check_matrix_finite(data.inputs, "training features");
  check_matrix_finite(data.targets, "training targets");

  TrainResult result{init, {}};
  if (cfg.epochs == 0) return result;

  auto specs = init.layer_specs();
  const std::size_t n_layers = specs.size();
  std::vector<Eigen::MatrixXd> weights(n_layers);
  std::vector<Eigen::VectorXd> biases(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    weights[l] = init.layer(l).weights;
    biases[l] = init.layer(l).bias;
  }
  std::vector<Eigen::MatrixXd> m_w(n_layers), v_w(n_layers);
  std::vector<Eigen::VectorXd> m_b(n_layers), v_b(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    m_w[l] = v_w[l] = Eigen::MatrixXd::Zero(weights[l].rows(), weights[l].cols());
    m_b[l] = v_b[l] = Eigen::VectorXd::Zero(biases[l].size());
  }

  const double temperature = init.temperature();
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);

  std::vector<Eigen::MatrixXd> pre(n_layers);   // pre-activations per layer
  std::vector<Eigen::MatrixXd> acts(n_layers + 1);
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;
  result.loss_history.reserve(cfg.epochs);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const auto batch = static_cast<Eigen::Index>(stop - start);
      Eigen::MatrixXd x(batch, data.inputs.cols());
      Eigen::MatrixXd y(batch, 2);
      for (Eigen::Index r = 0; r < batch; ++r) {
        const auto src = static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(r)]);
        x.row(r) = data.inputs.row(src);
        y.row(r) = data.targets.row(src);
      }

      acts[0] = std::move(x);
      for (std::size_t l = 0; l < n_layers; ++l) {
        pre[l] = acts[l] * weights[l].transpose();
        pre[l].rowwise() += biases[l].transpose();
        acts[l + 1] = specs[l].activation == Activation::relu ? pre[l].cwiseMax(0.0) : pre[l];
      }

      // Softmax cross-entropy at temperature T; dL/dz = (p - y) / T.
      Eigen::MatrixXd scaled = acts[n_layers] / temperature;
      Eigen::VectorXd top = scaled.rowwise().maxCoeff();
      scaled.colwise() -= top;
      Eigen::MatrixXd expz = scaled.array().exp();
      Eigen::VectorXd norm = expz.rowwise().sum();
      Eigen::MatrixXd probs = expz.array().colwise() / norm.array();
      Eigen::MatrixXd log_probs = scaled.array().colwise() - norm.array().log();
      epoch_loss += -(y.array() * log_probs.array()).sum();
      if (!std::isfinite(epoch_loss)) throw NumericError("training loss became non-finite");

      Eigen::MatrixXd delta = (probs - y) / (temperature * static_cast<double>(batch));

      beta1_pow *= cfg.adam.beta1;
      beta2_pow *= cfg.adam.beta2;
      const double lr = cfg.learning_rate;
      const double c1 = 1.0 - beta1_pow;
      const double c2 = 1.0 - beta2_pow;
      const auto& adam = cfg.adam;

      for (std::size_t l = n_layers; l-- > 0;) {
        Eigen::MatrixXd grad_w = delta.transpose() * acts[l];
        Eigen::VectorXd grad_b = delta.colwise().sum().transpose();
        if (l > 0) {
          Eigen::MatrixXd back = delta * weights[l];
          if (specs[l - 1].activation == Activation::relu) {
            back = (pre[l - 1].array() > 0.0).select(back, 0.0);
          }
          delta = std::move(back);
        }

        m_w[l] = adam.beta1 * m_w[l] + (1.0 - adam.beta1) * grad_w;
        v_w[l] = adam.beta2 * v_w[l] + (1.0 - adam.beta2) * grad_w.cwiseProduct(grad_w);
        weights[l].array() -= lr * (m_w[l].array() / c1) / ((v_w[l].array() / c2).sqrt() + adam.epsilon);

        m_b[l] = adam.beta1 * m_b[l] + (1.0 - adam.beta1) * grad_b;
        v_b[l] = adam.beta2 * v_b[l] + (1.0 - adam.beta2) * grad_b.cwiseProduct(grad_b);
        biases[l].array() -= lr * (m_b[l].array() / c1) / ((v_b[l].array() / c2).sqrt() + adam.epsilon);
      }
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(n));
  }

  for (std::size_t l = 0; l < n_layers; ++l) {
    result.model.set_parameters(l, std::move(weights[l]), std::move(biases[l]));
  }
  result.model.check_finite();
  return result;
}

TrainResult fit_model(std::vector<LayerSpec> architecture, const TrainingSet& data,
                      const TrainConfig& cfg, double temperature) {
  const auto init = MlpModel::he_uniform(std::move(architecture), derive_seed(cfg.seed, 0x1A17), temperature);
  return train(init, data, cfg);
}

std::string serialize_model(const MlpModel& model) {
  nlohmann::json doc;
  doc["version"] = kModelSchemaVersion;
  doc["temperature"] = model.temperature();
  doc["layers"] = nlohmann::json::array();
  doc["weights"] = nlohmann::json::array();
  doc["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto& layer = model.layer(l);
    doc["layers"].push_back({{"in", layer.spec.input_dim},
                             {"out", layer.spec.output_dim},
                             {"activation", std::string(to_string(layer.spec.activation))}});
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.weights.size()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.push_back(layer.weights(r, c));
    }
    doc["weights"].push_back(std::move(w));
    doc["biases"].push_back(std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size()));
  }
  return doc.dump() + "\n";
}

MlpModel deserialize_model(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model JSON: ") + e.what());
  }
  try {
    if (doc.at("version").get<int>() != kModelSchemaVersion) {
      throw FormatError("unsupported model schema version");
    }
    std::vector<LayerSpec> specs;
    for (const auto& l : doc.at("layers")) {
      specs.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                       parse_activation(l.at("activation").get<std::string>())});
    }
    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    if (weights.size() != specs.size() || biases.size() != specs.size()) {
      throw ShapeError("model JSON: weights/biases count does not match layer count");
    }
    MlpModel model(specs, doc.at("temperature").get<double>());
    for (std::size_t l = 0; l < specs.size(); ++l) {
      const auto w = weights[l].get<std::vector<double>>();
      const auto b = biases[l].get<std::vector<double>>();
      const auto rows = static_cast<Eigen::Index>(specs[l].output_dim);
      const auto cols = static_cast<Eigen::Index>(specs[l].input_dim);
      if (w.size() != specs[l].output_dim * specs[l].input_dim || b.size() != specs[l].output_dim) {
        throw ShapeError("model JSON: layer " + std::to_string(l) + " parameter count mismatch");
      }
      Eigen::MatrixXd wm(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) wm(r, c) = w[static_cast<std::size_t>(r * cols + c)];
      }
      model.set_parameters(l, std::move(wm), Eigen::Map<const Eigen::VectorXd>(b.data(), rows));
    }
    model.check_finite();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model JSON schema: ") + e.what());
  }
}

}  // namespace evb
