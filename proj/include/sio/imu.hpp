// IMU segment aggregation, learned-correction application, preintegration
// of rotation/velocity/position deltas, world-frame state propagation and
// error-state covariance propagation.
//
// Everything here is a pure function over immutable values; segments may be
// preintegrated in parallel with no shared state.

#ifndef SIO_IMU_HPP
#define SIO_IMU_HPP

#include <span>
#include <vector>

#include "sio/geom.hpp"

namespace sio {

/// One inertial measurement: angular velocity (rad/s) + acceleration (m/s^2).
struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

/// Ordered measurements covering [t_start, t_end], e.g. between two scans.
///
/// Invariants (checked by validate): strictly increasing timestamps, all
/// inside [t_start, t_end], at least 2 samples.
struct ImuSegment {
  std::vector<ImuSample> samples;
  double t_start = 0.0;
  double t_end = 0.0;

  /// Throws std::invalid_argument on any invariant violation.
  void validate() const;
  double duration() const { return t_end - t_start; }
};

/// Per-sample corrections (additive, gyro xyz then accel xyz) and
/// uncertainties (variances, same ordering). One entry per segment sample.
struct CorrectionOutput {
  std::vector<Vec6> sigma;
  std::vector<Vec6> eta;
};

/// Preintegrated increments between two frames, with a 9x9 covariance
/// ordered (rotation, velocity, position).
struct PreintDelta {
  Mat3 dR = Mat3::Identity();
  Vec3 dv = Vec3::Zero();
  Vec3 dp = Vec3::Zero();
  Mat9 cov = Mat9::Zero();
};

/// World-frame navigation state at time t.
struct NavState {
  Mat3 R = Mat3::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 p = Vec3::Zero();
  double t = 0.0;
};

/// Extracts the samples with t in [t_start, t_end) into a segment.
/// Throws if fewer than 2 samples fall inside the window.
ImuSegment slice_segment(std::span<const ImuSample> stream, double t_start,
                         double t_end);

/// Adds the matching correction to each sample. Timestamps are unchanged.
/// Throws std::invalid_argument when corr length differs from sample count.
ImuSegment correct_segment(const ImuSegment& seg, const CorrectionOutput& corr);

/// Preintegrates the segment into (dR, dv, dp); cov is left zero.
///
/// Measurements are held constant over each step (zeroth-order hold); the
/// per-sample step is the timestamp difference to the next sample, the final
/// sample integrates up to t_end. dR is renormalized whenever the
/// orthonormality error exceeds 1e-7.
PreintDelta preintegrate(const ImuSegment& seg);

/// Transforms the preintegrated increments to the world frame at t + dt:
///   R' = R dR,  v' = v + g dt + R dv,  p' = p + v dt + 1/2 g dt^2 + R dp.
NavState propagate_state(const NavState& prev, const PreintDelta& delta,
                         const Vec3& gravity, double dt);

/// Iterates the error-state covariance over all samples of the segment:
///   S_{k+1} = A_k S_k A_k^T + B_w diag(eta_w) B_w^T + B_a diag(eta_a) B_a^T
/// with the corrected measurements (seg is raw; corr.sigma is applied
/// internally). The rotation error is a right perturbation of dR.
///
/// Throws when sigma0 is not symmetric PSD or corr has non-positive eta.
Mat9 propagate_covariance(const ImuSegment& seg, const CorrectionOutput& corr,
                          const Mat9& sigma0);

/// Zero corrections with the given constant per-sample variance vector.
CorrectionOutput constant_correction(std::size_t count, const Vec6& sigma,
                                     const Vec6& eta);

}  // namespace sio

#endif  // SIO_IMU_HPP
