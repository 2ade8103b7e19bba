#include "sio/imu.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <string>

namespace sio {

void ImuSegment::validate() const {
  if (samples.size() < 2)
    throw std::invalid_argument("ImuSegment: needs at least 2 samples, got " +
                                std::to_string(samples.size()));
  if (!(t_start < t_end))
    throw std::invalid_argument("ImuSegment: t_start must precede t_end");
  double prev = t_start - 1.0;
  for (const auto& s : samples) {
    if (!s.gyro.allFinite() || !s.accel.allFinite() || !std::isfinite(s.t))
      throw std::invalid_argument("ImuSegment: non-finite sample");
    if (s.t < t_start || s.t > t_end)
      throw std::invalid_argument("ImuSegment: sample at t=" +
                                  std::to_string(s.t) + " outside window");
    if (prev >= t_start && s.t <= prev)
      throw std::invalid_argument("ImuSegment: timestamps not increasing");
    prev = s.t;
  }
}

ImuSegment slice_segment(std::span<const ImuSample> stream, double t_start,
                         double t_end) {
  ImuSegment seg;
  seg.t_start = t_start;
  seg.t_end = t_end;
  for (const auto& s : stream) {
    if (s.t >= t_start && s.t < t_end) seg.samples.push_back(s);
  }
  seg.validate();
  return seg;
}

ImuSegment correct_segment(const ImuSegment& seg,
                           const CorrectionOutput& corr) {
  if (corr.sigma.size() != seg.samples.size())
    throw std::invalid_argument(
        "correct_segment: correction length " +
        std::to_string(corr.sigma.size()) + " != sample count " +
        std::to_string(seg.samples.size()));
  ImuSegment out = seg;
  for (std::size_t k = 0; k < out.samples.size(); ++k) {
    out.samples[k].gyro += corr.sigma[k].head<3>();
    out.samples[k].accel += corr.sigma[k].tail<3>();
  }
  return out;
}

// Step duration of sample k: gap to the next sample, t_end for the last one.
static double step_dt(const ImuSegment& seg, std::size_t k) {
  if (k + 1 < seg.samples.size())
    return seg.samples[k + 1].t - seg.samples[k].t;
  return seg.t_end - seg.samples[k].t;
}

PreintDelta preintegrate(const ImuSegment& seg) {
  seg.validate();
  PreintDelta d;
  for (std::size_t k = 0; k < seg.samples.size(); ++k) {
    const double dt = step_dt(seg, k);
    const Vec3 acc_rot = d.dR * seg.samples[k].accel;
    d.dp += d.dv * dt + 0.5 * acc_rot * dt * dt;
    d.dv += acc_rot * dt;
    d.dR = d.dR * exp_so3(seg.samples[k].gyro * dt);
    if (orthonormality_error(d.dR) > 1e-7) d.dR = renormalize_rotation(d.dR);
  }
  return d;
}

NavState propagate_state(const NavState& prev, const PreintDelta& delta,
                         const Vec3& gravity, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("propagate_state: dt <= 0");
  NavState out;
  out.R = prev.R * delta.dR;
  out.v = prev.v + gravity * dt + prev.R * delta.dv;
  out.p = prev.p + prev.v * dt + 0.5 * gravity * dt * dt + prev.R * delta.dp;
  out.t = prev.t + dt;
  return out;
}

static void check_psd(const Mat9& m, const char* who) {
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument(std::string(who) + ": matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat9> es(m, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10)
    throw std::invalid_argument(std::string(who) + ": matrix not PSD");
}

Mat9 propagate_covariance(const ImuSegment& seg, const CorrectionOutput& corr,
                          const Mat9& sigma0) {
  if (corr.eta.size() != seg.samples.size())
    throw std::invalid_argument("propagate_covariance: eta length mismatch");
  for (const auto& e : corr.eta)
    if ((e.array() < 0.0).any())
      throw std::invalid_argument("propagate_covariance: negative eta");
  check_psd(sigma0, "propagate_covariance");

  const ImuSegment corrected = correct_segment(seg, corr);

  // Error state (d_phi, d_v, d_p): right-perturbation rotation error
  // transported by Exp(w dt)^T, first-order noise injection (the rotation
  // Jacobian of the step is taken as identity).
  Mat9 cov = sigma0;
  Mat3 dR = Mat3::Identity();
  for (std::size_t k = 0; k < corrected.samples.size(); ++k) {
    const double dt = step_dt(corrected, k);
    const Vec3 w = corrected.samples[k].gyro;
    const Vec3 a = corrected.samples[k].accel;

    const Mat3 step_R = exp_so3(w * dt);
    const Mat3 E = step_R.transpose();
    const Mat3 C = -dR * skew(a) * dt;        // rotation -> velocity
    const Mat3 D = 0.5 * C * dt;              // rotation -> position
    const Mat3 Bw = Mat3::Identity() * dt;    // gyro noise -> rotation
    const Mat3 Bv = dR * dt;                  // accel noise -> velocity
    const Mat3 Bp = 0.5 * dR * dt * dt;       // accel noise -> position

    // Blockwise S' = A S A^T with A = [[E,0,0],[C,I,0],[D,dt*I,I]].
    const Mat3 S00 = cov.block<3, 3>(0, 0);
    const Mat3 S01 = cov.block<3, 3>(0, 3);
    const Mat3 S02 = cov.block<3, 3>(0, 6);
    const Mat3 S11 = cov.block<3, 3>(3, 3);
    const Mat3 S12 = cov.block<3, 3>(3, 6);
    const Mat3 S22 = cov.block<3, 3>(6, 6);

    const Mat3 ES00 = E * S00;
    const Mat3 R0 = ES00 * E.transpose();
    const Mat3 CS00 = C * S00;
    const Mat3 DS00 = D * S00;
    const Mat3 R1 = CS00 * E.transpose() + S01.transpose() * E.transpose();
    const Mat3 R2 =
        DS00 * E.transpose() + dt * S01.transpose() * E.transpose() +
        S02.transpose() * E.transpose();
    const Mat3 R11 = CS00 * C.transpose() + C * S01 + S01.transpose() * C.transpose() + S11;
    const Mat3 R12 = CS00 * D.transpose() + C * (dt * S01 + S02) +
                     S01.transpose() * D.transpose() + dt * S11 + S12;
    const Mat3 R22 = DS00 * D.transpose() + D * (dt * S01 + S02) +
                     (dt * S01 + S02).transpose() * D.transpose() +
                     dt * dt * S11 + dt * S12 + dt * S12.transpose() + S22;

    const Vec3 eta_w = corr.eta[k].head<3>();
    const Vec3 eta_a = corr.eta[k].tail<3>();

    cov.block<3, 3>(0, 0) = R0 + Bw * eta_w.asDiagonal() * Bw.transpose();
    cov.block<3, 3>(0, 3) = R1.transpose();
    cov.block<3, 3>(0, 6) = R2.transpose();
    cov.block<3, 3>(3, 0) = R1;
    cov.block<3, 3>(3, 3) = R11 + Bv * eta_a.asDiagonal() * Bv.transpose();
    cov.block<3, 3>(3, 6) = R12 + Bv * eta_a.asDiagonal() * Bp.transpose();
    cov.block<3, 3>(6, 0) = R2;
    cov.block<3, 3>(6, 3) = cov.block<3, 3>(3, 6).transpose();
    cov.block<3, 3>(6, 6) = R22 + Bp * eta_a.asDiagonal() * Bp.transpose();

    dR = dR * step_R;
    if (orthonormality_error(dR) > 1e-7) dR = renormalize_rotation(dR);
  }
  // Exact symmetry for downstream Cholesky factorizations.
  cov = 0.5 * (cov + cov.transpose()).eval();
  return cov;
}

CorrectionOutput constant_correction(std::size_t count, const Vec6& sigma,
                                     const Vec6& eta) {
  CorrectionOutput out;
  out.sigma.assign(count, sigma);
  out.eta.assign(count, eta);
  return out;
}

}  // namespace sio
