#pragma once

// Defenses against add-only evasion: adversarial training, defensive
// distillation, feature squeezing with an L1 detector, and PCA input
// reduction.

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evb/apilog.hpp"
#include "evb/tensornet.hpp"

namespace evb {

// ---------------------------------------------------------------------------
// Feature squeezing

struct Squeezer {
  enum class Kind { quantize, binarize };
  Kind kind = Kind::quantize;
  int levels = 17;  // quantize only; grid {0, 1/(L-1), ..., 1}

  static Squeezer quantize(int levels) { return {Kind::quantize, levels}; }
  static Squeezer binarizer() { return {Kind::binarize, 2}; }
  void validate() const;
};

std::string describe(const Squeezer& squeezer);
Squeezer parse_squeezer(std::string_view text);  // "quantize:9" or "binarize"

FeatureVector squeeze(const FeatureVector& x, const Squeezer& squeezer);
std::vector<double> squeeze_values(std::span<const double> x, const Squeezer& squeezer);

struct SqueezeConfig {
  Squeezer squeezer;
  double threshold = 0.0;  // on the L1 distance between probability pairs
};

enum class Verdict { legitimate, adversarial };

struct SqueezeDecision {
  Verdict verdict = Verdict::legitimate;
  double distance = 0.0;  // in [0, 2]
};

// Adversarial iff || F(x) - F(squeeze(x)) ||_1 > threshold.
SqueezeDecision squeeze_detect(const MlpModel& model, std::span<const double> x, const SqueezeConfig& cfg);

struct CalibrationPoint {
  double threshold = 0.0;
  double fpr = 0.0;  // legitimate samples flagged
  double tpr = 0.0;  // adversarial samples flagged
};

struct SqueezeCalibration {
  SqueezeConfig config;
  double validation_fpr = 0.0;
  double adversarial_tpr = 0.0;
  std::vector<CalibrationPoint> curve;  // ascending thresholds
};

inline constexpr double kDefaultSqueezeFpr = 0.05;

// Picks the smallest threshold whose false-alarm rate on `legitimate` is at
// most target_fpr. `adversarial` only feeds the reported TPR and curve and
// may be empty.
SqueezeCalibration calibrate_squeeze(const MlpModel& model, const Squeezer& squeezer,
                                     std::span<const FeatureVector> legitimate,
                                     std::span<const FeatureVector> adversarial,
                                     double target_fpr = kDefaultSqueezeFpr);

// `threshold,fpr,tpr`
std::string calibration_csv(const SqueezeCalibration& calibration);

// ---------------------------------------------------------------------------
// PCA reduction

inline constexpr std::size_t kDefaultPcaComponents = 19;

class PcaProjection {
 public:
  PcaProjection() = default;
  // components rows must be orthonormal (checked to 1e-8).
  PcaProjection(Eigen::VectorXd mean, Eigen::MatrixXd components, std::vector<double> explained_variance);

  std::size_t k() const { return static_cast<std::size_t>(components_.rows()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& components() const { return components_; }  // k x M
  // Ratios for the full spectrum (length M), non-increasing.
  const std::vector<double>& explained_variance() const { return explained_variance_; }

  Eigen::VectorXd project(std::span<const double> x) const;
  Eigen::VectorXd reconstruct(const Eigen::VectorXd& y) const;
  // A copy keeping only the leading `k` components.
  PcaProjection truncated(std::size_t k) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd components_;
  std::vector<double> explained_variance_;
};

// Covariance eigendecomposition; each component's largest-magnitude entry is
// positive. Throws ConfigError when k is 0, exceeds M or the sample count.
PcaProjection fit_pca(std::span<const FeatureVector> samples, std::size_t k);

std::string pca_to_json(const PcaProjection& projection);
PcaProjection pca_from_json(std::string_view json_text);

struct PcaPipeline {
  PcaProjection projection;
  MlpModel model;  // input_dim == projection.k()

  ProbPair forward(std::span<const double> x) const;
  Label predict_class(std::span<const double> x) const;
};

PcaPipeline pca_defended_pipeline(std::span<const FeatureVector> training, std::size_t k,
                                  std::span<const std::size_t> hidden, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Defensive distillation

inline constexpr double kDefaultDistillTemperature = 50.0;

struct DistillConfig {
  double temperature = kDefaultDistillTemperature;
  std::vector<std::size_t> teacher_hidden;
  std::vector<std::size_t> student_hidden;  // empty: same as the teacher
};

struct DistillResult {
  MlpModel teacher;  // keeps temperature T
  MlpModel student;  // served at temperature 1
  std::vector<ProbPair> soft_labels;
  std::vector<double> teacher_loss;
  std::vector<double> student_loss;
};

DistillResult distill(std::span<const FeatureVector> training, const DistillConfig& cfg,
                      const TrainConfig& train_cfg);

// ---------------------------------------------------------------------------
// Adversarial training

struct AdvTrainingResult {
  MlpModel model;
  std::vector<double> loss_history;
  std::size_t n_clean = 0;
  std::size_t n_malware = 0;
  std::size_t duplicates_removed = 0;
};

// Trains on base + adversarial (relabeled malware) + clean top-up after
// removing exact duplicate feature vectors. Throws ConfigError for an empty
// adversarial set or a clean share outside [0.4, 0.6].
AdvTrainingResult adversarial_training(std::span<const FeatureVector> base,
                                       std::span<const FeatureVector> adversarial,
                                       std::span<const FeatureVector> clean_topup,
                                       std::span<const std::size_t> hidden, const TrainConfig& cfg);

}  // namespace evb
