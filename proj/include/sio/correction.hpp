// Pluggable IMU correction/uncertainty model, the self-supervised losses and
// a finite-difference gradient-descent trainer.

#ifndef SIO_CORRECTION_HPP
#define SIO_CORRECTION_HPP

#include <memory>
#include <span>
#include <vector>

#include "sio/features.hpp"
#include "sio/imu.hpp"
#include "sio/kvdoc.hpp"

namespace sio {

/// Deterministic map from an IMU segment to per-sample corrections and
/// positive uncertainties, parameterized by a flat vector for training.
class CorrectionModel {
 public:
  virtual ~CorrectionModel() = default;
  virtual CorrectionOutput predict(const ImuSegment& seg) const = 0;
  virtual VecX params() const = 0;
  virtual void set_params(const VecX& theta) = 0;
  /// Independent copy; lets gradient workers perturb parameters in parallel.
  virtual std::unique_ptr<CorrectionModel> clone() const = 0;
};

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

/// Variance floor applied on top of the softplus output.
inline constexpr double kEtaFloor = 1e-6;

/// Two-layer feed-forward map from the 12 window summary features to
/// 6 corrections (applied uniformly to every sample of the window) and
/// 6 uncertainties. tanh hidden layer; eta = softplus(raw) + floor.
///
/// Parameter packing: W1 (H x F, row-major), b1 (H), W2 (12 x H, row-major),
/// b2 (12); total (F+1)*H + (H+1)*12.
class WindowModel final : public CorrectionModel {
 public:
  explicit WindowModel(int hidden_width = 8);

  CorrectionOutput predict(const ImuSegment& seg) const override;
  VecX params() const override { return theta_; }
  void set_params(const VecX& theta) override;
  std::unique_ptr<CorrectionModel> clone() const override {
    return std::make_unique<WindowModel>(*this);
  }

  int hidden_width() const { return hidden_; }
  int param_count() const {
    return (kWindowFeatureDim + 1) * hidden_ + (hidden_ + 1) * 12;
  }

  /// z-scoring constants applied to the features before the network.
  void set_feature_norm(const FeatureVec& mean, const FeatureVec& stddev);
  const FeatureVec& feature_mean() const { return feat_mean_; }
  const FeatureVec& feature_std() const { return feat_std_; }

  /// Raw 12-output head (6 corrections, 6 pre-softplus uncertainties).
  Eigen::Matrix<double, 12, 1> forward(const FeatureVec& features) const;

  KvDoc to_doc() const;
  static WindowModel from_doc(const KvDoc& doc);

 private:
  int hidden_;
  VecX theta_;
  FeatureVec feat_mean_ = FeatureVec::Zero();
  FeatureVec feat_std_ = FeatureVec::Ones();
};

/// Pose-level loss terms: geodesic rotation error norm and Euclidean
/// velocity/position error norms between prediction and label.
struct PoseLosses {
  double rot = 0.0;
  double vel = 0.0;
  double pos = 0.0;
};

/// Uncertainty-aware terms 1/2 (e^T S^-1 e + ln det S) per 3x3 block of the
/// propagated covariance; may be negative through the log-determinant.
struct CovLosses {
  double rot = 0.0;
  double vel = 0.0;
  double pos = 0.0;
};

struct LossBreakdown {
  double rot = 0.0, vel = 0.0, pos = 0.0;
  double rot_cov = 0.0, vel_cov = 0.0, pos_cov = 0.0;

  double total(double epsilon) const {
    return rot + vel + pos + epsilon * (rot_cov + vel_cov + pos_cov);
  }
};

PoseLosses pose_losses(const NavState& pred, const NavState& label);

/// cov is the 9x9 propagated covariance ordered (rotation, velocity,
/// position). Throws on a non-SPD or numerically singular block
/// (determinant below 1e-300).
CovLosses cov_losses(const NavState& pred, const NavState& label,
                     const Mat9& cov);

/// Mean over the batch of w * [pose terms + epsilon * covariance terms].
/// Throws on an empty batch or negative weights.
double batch_loss(std::span<const std::pair<LossBreakdown, double>> items,
                  double epsilon);

enum class GradMode { FiniteDifference, Analytic };

struct TrainConfig {
  double epsilon = 1e-3;     // scaling of the uncertainty-aware terms
  double learning_rate = 0.02;
  int epochs = 50;
  GradMode gradient_mode = GradMode::FiniteDifference;
  double fd_step = 1e-5;     // central-difference step
};

/// One supervised window: the raw segment, the state the prediction starts
/// from, the supervisory target at segment end and its motion weight.
struct TrainItem {
  ImuSegment seg;
  NavState base;
  NavState target;
  double weight = 1.0;
};

struct TrainReport {
  std::vector<double> loss_history;  // weighted batch loss per epoch
};

/// Full forward pass for one item: predict corrections, correct, preintegrate,
/// propagate covariance and state, evaluate all loss terms.
LossBreakdown item_losses(const CorrectionModel& model, const TrainItem& item,
                          const Vec3& gravity);

/// Weighted batch loss of the whole dataset under the current parameters.
/// Throws with the offending segment index if any item loss is non-finite.
double dataset_loss(const CorrectionModel& model,
                    std::span<const TrainItem> data, const Vec3& gravity,
                    double epsilon);

/// Central finite-difference gradient of dataset_loss at the current
/// parameters. Exposed separately for gradient-consistency checks.
VecX loss_gradient_fd(CorrectionModel& model, std::span<const TrainItem> data,
                      const Vec3& gravity, double epsilon, double step);

/// Gradient descent on the motion-weighted batch loss. Steps that do not
/// decrease the loss are halved (up to 16 times) before being skipped, so
/// recorded epoch losses are nonincreasing.
TrainReport train(CorrectionModel& model, const std::vector<TrainItem>& data,
                  const Vec3& gravity, const TrainConfig& cfg);

}  // namespace sio

#endif  // SIO_CORRECTION_HPP
