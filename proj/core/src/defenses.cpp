#include "evb/defenses.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "evb/error.hpp"
#include "evb/numfmt.hpp"
#include "evb/rng.hpp"

namespace evb {
namespace {

double l1_pair_distance(const ProbPair& a, const ProbPair& b) {
  return std::abs(a.clean - b.clean) + std::abs(a.malware - b.malware);
}

double flagged_fraction(const std::vector<double>& distances, double threshold) {
  if (distances.empty()) return 0.0;
  const auto flagged = std::count_if(distances.begin(), distances.end(), [&](double d) { return d > threshold; });
  return static_cast<double>(flagged) / static_cast<double>(distances.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Feature squeezing

void Squeezer::validate() const {
  if (kind == Kind::quantize && levels < 2) throw ConfigError("quantize squeezer needs levels >= 2");
}

std::string describe(const Squeezer& squeezer) {
  return squeezer.kind == Squeezer::Kind::binarize ? std::string("binarize")
                                                   : "quantize:" + std::to_string(squeezer.levels);
}

Squeezer parse_squeezer(std::string_view text) {
  if (text == "binarize") return Squeezer::binarizer();
  constexpr std::string_view prefix = "quantize:";
  if (text.substr(0, prefix.size()) == prefix) {
    const double levels = parse_double(text.substr(prefix.size()));
    if (levels != std::floor(levels)) throw ConfigError("quantize levels must be an integer");
    auto squeezer = Squeezer::quantize(static_cast<int>(levels));
    squeezer.validate();
    return squeezer;
  }
  throw ConfigError("unknown squeezer '" + std::string(text) + "' (expected quantize:<L> or binarize)");
}

std::vector<double> squeeze_values(std::span<const double> x, const Squeezer& squeezer) {
  squeezer.validate();
  std::vector<double> out(x.size());
  if (squeezer.kind == Squeezer::Kind::binarize) {
    std::transform(x.begin(), x.end(), out.begin(), [](double v) { return v > 0.0 ? 1.0 : 0.0; });
    return out;
  }
  const double steps = static_cast<double>(squeezer.levels - 1);
  std::transform(x.begin(), x.end(), out.begin(), [steps](double v) {
    return std::clamp(std::round(v * steps), 0.0, steps) / steps;
  });
  return out;
}

FeatureVector squeeze(const FeatureVector& x, const Squeezer& squeezer) {
  return {x.id, x.label, squeeze_values(x.values, squeezer)};
}

SqueezeDecision squeeze_detect(const MlpModel& model, std::span<const double> x, const SqueezeConfig& cfg) {
  const auto squeezed = squeeze_values(x, cfg.squeezer);
  const double distance = l1_pair_distance(model.forward(x), model.forward(squeezed));
  return {distance > cfg.threshold ? Verdict::adversarial : Verdict::legitimate, distance};
}

SqueezeCalibration calibrate_squeeze(const MlpModel& model, const Squeezer& squeezer,
                                     std::span<const FeatureVector> legitimate,
                                     std::span<const FeatureVector> adversarial, double target_fpr) {
  if (legitimate.empty()) throw ConfigError("squeeze calibration needs legitimate samples");
  if (!(target_fpr >= 0.0 && target_fpr < 1.0)) throw ConfigError("target FPR must lie in [0, 1)");

  const SqueezeConfig probe{squeezer, 0.0};
  std::vector<double> legit;
  std::vector<double> adv;
  for (const auto& s : legitimate) legit.push_back(squeeze_detect(model, s.view(), probe).distance);
  for (const auto& s : adversarial) adv.push_back(squeeze_detect(model, s.view(), probe).distance);

  std::vector<double> sorted = legit;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // At most `allowed` legitimate distances may lie strictly above the threshold.
  const auto allowed = static_cast<std::size_t>(std::floor(target_fpr * static_cast<double>(sorted.size()) + 1e-9));
  const double threshold = allowed < sorted.size() ? sorted[allowed] : 0.0;

  SqueezeCalibration out;
  out.config = {squeezer, threshold};
  out.validation_fpr = flagged_fraction(legit, threshold);
  out.adversarial_tpr = flagged_fraction(adv, threshold);

  std::vector<double> pool = legit;
  pool.insert(pool.end(), adv.begin(), adv.end());
  std::sort(pool.begin(), pool.end());
  std::set<double> thresholds{threshold};
  constexpr std::size_t kCurvePoints = 100;
  for (std::size_t q = 0; q <= kCurvePoints; ++q) {
    thresholds.insert(pool[(pool.size() - 1) * q / kCurvePoints]);
  }
  for (double t : thresholds) out.curve.push_back({t, flagged_fraction(legit, t), flagged_fraction(adv, t)});
  return out;
}

std::string calibration_csv(const SqueezeCalibration& calibration) {
  std::ostringstream out;
  out << "threshold,fpr,tpr\n";
  for (const auto& p : calibration.curve) {
    out << format_double(p.threshold) << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// PCA reduction

PcaProjection::PcaProjection(Eigen::VectorXd mean, Eigen::MatrixXd components,
                             std::vector<double> explained_variance)
    : mean_(std::move(mean)), components_(std::move(components)), explained_variance_(std::move(explained_variance)) {
  if (components_.cols() != mean_.size()) throw ShapeError("PCA components do not match the mean length");
  if (components_.rows() == 0 || components_.rows() > mean_.size()) throw ConfigError("PCA k must lie in [1, M]");
  const Eigen::MatrixXd gram = components_ * components_.transpose();
  const auto k = components_.rows();
  if ((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-8) {
    throw ConfigError("PCA components are not orthonormal");
  }
}

Eigen::VectorXd PcaProjection::project(std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw ShapeError("PCA input has length " + std::to_string(x.size()) + ", expected " + std::to_string(input_dim()));
  }
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  return components_ * (v - mean_);
}

Eigen::VectorXd PcaProjection::reconstruct(const Eigen::VectorXd& y) const {
  if (y.size() != components_.rows()) throw ShapeError("PCA coordinates do not match k");
  return components_.transpose() * y + mean_;
}

PcaProjection PcaProjection::truncated(std::size_t k) const {
  if (k == 0 || k > this->k()) throw ConfigError("cannot truncate PCA to k=" + std::to_string(k));
  return PcaProjection(mean_, components_.topRows(static_cast<Eigen::Index>(k)), explained_variance_);
}

PcaProjection fit_pca(std::span<const FeatureVector> samples, std::size_t k) {
  if (samples.empty()) throw ConfigError("PCA needs samples");
  const std::size_t m = samples.front().size();
  if (k == 0) throw ConfigError("PCA k must be >= 1");
  if (k > m) throw ConfigError("PCA k=" + std::to_string(k) + " exceeds feature count " + std::to_string(m));
  if (k > samples.size()) {
    throw ConfigError("PCA k=" + std::to_string(k) + " exceeds sample count " + std::to_string(samples.size()));
  }

  const Eigen::MatrixXd data = feature_matrix(samples);
  const Eigen::VectorXd mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - mean.transpose();
  const double denom = samples.size() > 1 ? static_cast<double>(samples.size() - 1) : 1.0;
  const Eigen::MatrixXd covariance = (centered.transpose() * centered) / denom;

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(covariance);
  if (solver.info() != Eigen::Success) throw NumericError("covariance eigendecomposition failed");
  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd& vectors = solver.eigenvectors();

  const auto dim = static_cast<Eigen::Index>(m);
  double total = 0.0;
  for (Eigen::Index i = 0; i < dim; ++i) total += std::max(values[i], 0.0);

  std::vector<double> ratios(m, 0.0);
  Eigen::MatrixXd components(static_cast<Eigen::Index>(k), dim);
  for (Eigen::Index r = 0; r < dim; ++r) {
    const Eigen::Index src = dim - 1 - r;
    ratios[static_cast<std::size_t>(r)] = total > 0.0 ? std::max(values[src], 0.0) / total : 0.0;
    if (r >= static_cast<Eigen::Index>(k)) continue;
    Eigen::VectorXd v = vectors.col(src);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v[pivot] < 0.0) v = -v;
    components.row(r) = v.transpose();
  }
  return PcaProjection(mean, std::move(components), std::move(ratios));
}

std::string pca_to_json(const PcaProjection& projection) {
  nlohmann::ordered_json doc;
  doc["k"] = projection.k();
  doc["mean"] = std::vector<double>(projection.mean().data(), projection.mean().data() + projection.mean().size());
  std::vector<double> flat;
  const auto& c = projection.components();
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) flat.push_back(c(r, j));
  }
  doc["components"] = flat;
  doc["explained_variance"] = projection.explained_variance();
  return doc.dump() + "\n";
}

PcaProjection pca_from_json(std::string_view json_text) {
  try {
    const auto doc = nlohmann::json::parse(json_text);
    const auto k = doc.at("k").get<std::size_t>();
    const auto mean = doc.at("mean").get<std::vector<double>>();
    const auto flat = doc.at("components").get<std::vector<double>>();
    if (flat.size() != k * mean.size()) throw ShapeError("PCA JSON: components size is not k x M");
    const auto m = static_cast<Eigen::Index>(mean.size());
    Eigen::MatrixXd components(static_cast<Eigen::Index>(k), m);
    for (Eigen::Index r = 0; r < components.rows(); ++r) {
      for (Eigen::Index j = 0; j < m; ++j) components(r, j) = flat[static_cast<std::size_t>(r * m + j)];
    }
    return PcaProjection(Eigen::Map<const Eigen::VectorXd>(mean.data(), m), std::move(components),
                         doc.value("explained_variance", std::vector<double>{}));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("PCA JSON: ") + e.what());
  }
}

ProbPair PcaPipeline::forward(std::span<const double> x) const {
  const Eigen::VectorXd y = projection.project(x);
  return model.forward(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

Label PcaPipeline::predict_class(std::span<const double> x) const {
  const Eigen::VectorXd y = projection.project(x);
  return model.predict_class(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

PcaPipeline pca_defended_pipeline(std::span<const FeatureVector> training, std::size_t k,
                                  std::span<const std::size_t> hidden, const TrainConfig& cfg) {
  PcaProjection projection = fit_pca(training, k);
  Eigen::MatrixXd reduced(static_cast<Eigen::Index>(training.size()), static_cast<Eigen::Index>(k));
  std::vector<Label> labels;
  labels.reserve(training.size());
  for (std::size_t i = 0; i < training.size(); ++i) {
    if (!training[i].label) throw ConfigError("training sample '" + training[i].id + "' has no label");
    reduced.row(static_cast<Eigen::Index>(i)) = projection.project(training[i].view()).transpose();
    labels.push_back(*training[i].label);
  }
  auto fitted = fit_model(dense_architecture(k, hidden), hard_label_set(std::move(reduced), labels), cfg);
  return {std::move(projection), std::move(fitted.model)};
}

// ---------------------------------------------------------------------------
// Defensive distillation

DistillResult distill(std::span<const FeatureVector> training, const DistillConfig& cfg,
                      const TrainConfig& train_cfg) {
  if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature)) {
    throw ConfigError("distillation temperature must be positive");
  }
  if (training.empty()) throw ConfigError("distillation needs training data");
  const std::size_t m = training.front().size();
  const auto hard = hard_label_set(training);

  auto teacher = fit_model(dense_architecture(m, cfg.teacher_hidden), hard, train_cfg, cfg.temperature);

  DistillResult out;
  out.soft_labels.reserve(training.size());
  for (const auto& s : training) out.soft_labels.push_back(teacher.model.forward(s.view()));

  TrainConfig student_cfg = train_cfg;
  student_cfg.seed = derive_seed(train_cfg.seed, 0x5757);
  const auto& student_hidden = cfg.student_hidden.empty() ? cfg.teacher_hidden : cfg.student_hidden;
  auto student = fit_model(dense_architecture(m, student_hidden),
                           soft_label_set(hard.inputs, out.soft_labels), student_cfg, cfg.temperature);
  student.model.set_temperature(1.0);

  out.teacher = std::move(teacher.model);
  out.student = std::move(student.model);
  out.teacher_loss = std::move(teacher.loss_history);
  out.student_loss = std::move(student.loss_history);
  return out;
}

// ---------------------------------------------------------------------------
// Adversarial training

AdvTrainingResult adversarial_training(std::span<const FeatureVector> base,
                                       std::span<const FeatureVector> adversarial,
                                       std::span<const FeatureVector> clean_topup,
                                       std::span<const std::size_t> hidden, const TrainConfig& cfg) {
  if (adversarial.empty()) throw ConfigError("adversarial training needs adversarial examples");

  std::vector<FeatureVector> pool;
  pool.reserve(base.size() + adversarial.size() + clean_topup.size());
  pool.insert(pool.end(), base.begin(), base.end());
  for (const auto& a : adversarial) {
    if (a.label == Label::clean) throw ConfigError("adversarial example '" + a.id + "' is labeled clean");
    FeatureVector relabeled = a;
    relabeled.label = Label::malware;
    pool.push_back(std::move(relabeled));
  }
  for (const auto& c : clean_topup) {
    if (c.label != Label::clean) throw ConfigError("clean top-up sample '" + c.id + "' is not labeled clean");
    pool.push_back(c);
  }

  AdvTrainingResult out;
  std::set<std::vector<double>> seen;
  std::vector<FeatureVector> unique;
  unique.reserve(pool.size());
  for (auto& s : pool) {
    if (!s.label) throw ConfigError("training sample '" + s.id + "' has no label");
    if (!seen.insert(s.values).second) {
      ++out.duplicates_removed;
      continue;
    }
    ++(*s.label == Label::clean ? out.n_clean : out.n_malware);
    unique.push_back(std::move(s));
  }

  const double clean_share = static_cast<double>(out.n_clean) / static_cast<double>(unique.size());
  if (clean_share < 0.4 || clean_share > 0.6) {
    throw ConfigError("adversarial training set is unbalanced: clean share " + format_double(clean_share));
  }

  const std::size_t m = unique.front().size();
  auto fitted = fit_model(dense_architecture(m, hidden), hard_label_set(unique), cfg);
  out.model = std::move(fitted.model);
  out.loss_history = std::move(fitted.loss_history);
  return out;
}

}  // namespace evb
