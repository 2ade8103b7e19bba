#include "sio/correction.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <stdexcept>
#include <string>

#include "sio/util.hpp"

namespace sio {

WindowModel::WindowModel(int hidden_width) : hidden_(hidden_width) {
  if (hidden_width < 1)
    throw std::invalid_argument("WindowModel: hidden width must be >= 1");
  theta_ = VecX::Zero(param_count());
}

void WindowModel::set_params(const VecX& theta) {
  if (theta.size() != param_count())
    throw std::invalid_argument("WindowModel: expected " +
                                std::to_string(param_count()) +
                                " parameters, got " +
                                std::to_string(theta.size()));
  theta_ = theta;
}

void WindowModel::set_feature_norm(const FeatureVec& mean,
                                   const FeatureVec& stddev) {
  if ((stddev.array() <= 0.0).any())
    throw std::invalid_argument("WindowModel: feature std must be positive");
  feat_mean_ = mean;
  feat_std_ = stddev;
}

Eigen::Matrix<double, 12, 1> WindowModel::forward(
    const FeatureVec& features) const {
  const int F = kWindowFeatureDim;
  const FeatureVec x =
      (features - feat_mean_).cwiseQuotient(feat_std_);

  Eigen::VectorXd hidden(hidden_);
  int off = 0;
  for (int i = 0; i < hidden_; ++i) {
    double acc = theta_[off + hidden_ * F + i];  // b1
    for (int j = 0; j < F; ++j) acc += theta_[off + i * F + j] * x[j];
    hidden[i] = std::tanh(acc);
  }
  off += (F + 1) * hidden_;

  Eigen::Matrix<double, 12, 1> out;
  for (int i = 0; i < 12; ++i) {
    double acc = theta_[off + 12 * hidden_ + i];  // b2
    for (int j = 0; j < hidden_; ++j)
      acc += theta_[off + i * hidden_ + j] * hidden[j];
    out[i] = acc;
  }
  return out;
}

CorrectionOutput WindowModel::predict(const ImuSegment& seg) const {
  const auto y = forward(window_features(seg));
  Vec6 sigma = y.head<6>();
  Vec6 eta;
  for (int i = 0; i < 6; ++i) eta[i] = softplus(y[6 + i]) + kEtaFloor;
  return constant_correction(seg.samples.size(), sigma, eta);
}

KvDoc WindowModel::to_doc() const {
  KvDoc doc("window-model", 1);
  doc.set_int("feature_dim", kWindowFeatureDim);
  doc.set_int("hidden_width", hidden_);
  doc.set_vector("feature_mean", feat_mean_);
  doc.set_vector("feature_std", feat_std_);
  doc.set_vector("theta", theta_);
  return doc;
}

WindowModel WindowModel::from_doc(const KvDoc& doc) {
  if (doc.doc_type() != "window-model")
    throw std::runtime_error("WindowModel: unexpected document type '" +
                             doc.doc_type() + "'");
  if (doc.get_int("feature_dim") != kWindowFeatureDim)
    throw std::runtime_error("WindowModel: incompatible feature dimension");
  WindowModel m(static_cast<int>(doc.get_int("hidden_width")));
  const VecX mean = doc.get_vector("feature_mean");
  const VecX stddev = doc.get_vector("feature_std");
  m.set_feature_norm(mean, stddev);
  m.set_params(doc.get_vector("theta"));
  return m;
}

PoseLosses pose_losses(const NavState& pred, const NavState& label) {
  PoseLosses l;
  l.rot = log_so3(label.R.transpose() * pred.R).norm();
  l.vel = (label.v - pred.v).norm();
  l.pos = (label.p - pred.p).norm();
  return l;
}

// 1/2 (e^T S^-1 e + ln det S) via Cholesky; rejects non-SPD and vanishing
// determinants with a degenerate-covariance signal.
static double gaussian_nll(const Vec3& e, const Mat3& S, const char* block) {
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument(std::string("cov_losses: ") + block +
                                " block not symmetric");
  Eigen::LLT<Mat3> llt(S);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument(std::string("cov_losses: ") + block +
                                " block not positive definite (degenerate covariance)");
  const Mat3 L = llt.matrixL();
  double log_det = 0.0;
  for (int i = 0; i < 3; ++i) log_det += 2.0 * std::log(L(i, i));
  if (log_det < std::log(1e-300))
    throw std::invalid_argument(std::string("cov_losses: ") + block +
                                " block determinant underflow (degenerate covariance)");
  const Vec3 z = llt.solve(e);
  return 0.5 * (e.dot(z) + log_det);
}

CovLosses cov_losses(const NavState& pred, const NavState& label,
                     const Mat9& cov) {
  const Vec3 e_r = log_so3(label.R.transpose() * pred.R);
  const Vec3 e_v = label.v - pred.v;
  const Vec3 e_p = label.p - pred.p;
  CovLosses l;
  l.rot = gaussian_nll(e_r, cov.block<3, 3>(0, 0), "rotation");
  l.vel = gaussian_nll(e_v, cov.block<3, 3>(3, 3), "velocity");
  l.pos = gaussian_nll(e_p, cov.block<3, 3>(6, 6), "position");
  return l;
}

double batch_loss(std::span<const std::pair<LossBreakdown, double>> items,
                  double epsilon) {
  if (items.empty()) throw std::invalid_argument("batch_loss: empty batch");
  double acc = 0.0;
  for (const auto& [loss, w] : items) {
    if (w < 0.0) throw std::invalid_argument("batch_loss: negative weight");
    acc += w * loss.total(epsilon);
  }
  return acc / static_cast<double>(items.size());
}

LossBreakdown item_losses(const CorrectionModel& model, const TrainItem& item,
                          const Vec3& gravity) {
  const CorrectionOutput corr = model.predict(item.seg);
  const ImuSegment corrected = correct_segment(item.seg, corr);
  PreintDelta delta = preintegrate(corrected);
  delta.cov = propagate_covariance(item.seg, corr, Mat9::Zero());
  const NavState pred =
      propagate_state(item.base, delta, gravity, item.seg.duration());

  const PoseLosses pl = pose_losses(pred, item.target);
  const CovLosses cl = cov_losses(pred, item.target, delta.cov);
  return LossBreakdown{pl.rot, pl.vel, pl.pos, cl.rot, cl.vel, cl.pos};
}

double dataset_loss(const CorrectionModel& model,
                    std::span<const TrainItem> data, const Vec3& gravity,
                    double epsilon) {
  if (data.empty()) throw std::invalid_argument("dataset_loss: empty dataset");
  double acc = 0.0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    const double value =
        data[n].weight * item_losses(model, data[n], gravity).total(epsilon);
    if (!std::isfinite(value))
      throw std::runtime_error("training loss non-finite at segment index " +
                               std::to_string(n));
    acc += value;
  }
  return acc / static_cast<double>(data.size());
}

VecX loss_gradient_fd(CorrectionModel& model, std::span<const TrainItem> data,
                      const Vec3& gravity, double epsilon, double step) {
  if (!(step > 0.0))
    throw std::invalid_argument("loss_gradient_fd: step must be positive");
  const VecX theta = model.params();
  VecX grad(theta.size());
  // Each worker perturbs one coordinate of its own clone; result slots are
  // disjoint, so the gradient is identical for any thread count.
  parallel_for(static_cast<std::size_t>(theta.size()), [&](std::size_t j) {
    const auto local = model.clone();
    VecX t = theta;
    t[j] = theta[j] + step;
    local->set_params(t);
    const double up = dataset_loss(*local, data, gravity, epsilon);
    t[j] = theta[j] - step;
    local->set_params(t);
    const double down = dataset_loss(*local, data, gravity, epsilon);
    grad[static_cast<Eigen::Index>(j)] = (up - down) / (2.0 * step);
  });
  return grad;
}

TrainReport train(CorrectionModel& model, const std::vector<TrainItem>& data,
                  const Vec3& gravity, const TrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (!(cfg.learning_rate >= 0.0))
    throw std::invalid_argument("train: negative learning rate");
  if (cfg.gradient_mode == GradMode::Analytic)
    throw std::invalid_argument(
        "train: analytic gradients are not implemented; use finite-difference");
  if (!(cfg.fd_step > 0.0))
    throw std::invalid_argument("train: fd_step must be positive");

  TrainReport report;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = dataset_loss(model, data, gravity, cfg.epsilon);
    report.loss_history.push_back(loss);
    if (cfg.learning_rate == 0.0) continue;
    const VecX grad =
        loss_gradient_fd(model, data, gravity, cfg.epsilon, cfg.fd_step);
    // Backtracking on the step length: the full step is taken whenever it
    // already decreases the loss, otherwise it halves. No decreasing step
    // means the epoch leaves the parameters alone.
    const VecX theta = model.params();
    double step = cfg.learning_rate;
    for (int tries = 0; tries < 16; ++tries) {
      model.set_params(theta - step * grad);
      if (dataset_loss(model, data, gravity, cfg.epsilon) < loss) break;
      model.set_params(theta);
      step *= 0.5;
    }
    log_debug("epoch " + std::to_string(epoch) + " loss=" + fmt_double(loss));
  }
  return report;
}

}  // namespace sio
