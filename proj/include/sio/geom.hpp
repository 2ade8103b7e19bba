// Minimal SO(3)/SE(3) toolbox used by every other module.
//
// Rotations are stored as plain 3x3 matrices. All functions are pure and
// operate on immutable values, so unrestricted concurrent use is safe.

#ifndef SIO_GEOM_HPP
#define SIO_GEOM_HPP

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cmath>

namespace sio {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using MatX = Eigen::MatrixXd;

/// Rigid transform: x_parent = R * x_child + p.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 p = Vec3::Zero();
};

/// Tangent-space difference of two poses (rotation vector + translation).
struct Twist {
  Vec3 rot = Vec3::Zero();    // radians
  Vec3 trans = Vec3::Zero();  // meters

  Vec6 vec() const {
    Vec6 v;
    v << rot, trans;
    return v;
  }
  double norm() const { return vec().norm(); }
};

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

/// Exponential map so(3) -> SO(3), Rodrigues formula.
/// Total function; for ||phi|| >= pi the log round trip is not guaranteed.
inline Mat3 exp_so3(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 K = skew(phi);
  if (theta2 < 1e-16) {
    // Second-order series, exact to double precision at this magnitude.
    return Mat3::Identity() + K + 0.5 * K * K;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (std::sin(theta) / theta) * K +
         ((1.0 - std::cos(theta)) / theta2) * K * K;
}

inline Vec3 vee(const Mat3& m) {
  return Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

/// Logarithm map SO(3) -> so(3). Result norm <= pi.
///
/// The angle comes from atan2 of the skew and trace parts, which stays
/// well-conditioned at both ends of the range. Near theta = pi the axis is
/// extracted from the symmetric part (the generic formula divides by
/// sin(theta) and is singular there); the dominant diagonal entry selects
/// the best-conditioned column.
inline Vec3 log_so3(const Mat3& R) {
  const Vec3 w = vee(R);  // 2 sin(theta) * axis
  const double cos_theta = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double sin_theta = std::min(0.5 * w.norm(), 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);

  if (theta < 1e-7) {
    return (0.5 + theta * theta / 12.0) * w;
  }
  if (M_PI - theta > 1e-4) {
    return (0.5 * theta / sin_theta) * w;
  }

  // cos(theta) I + (1 - cos(theta)) a a^T is the symmetric part of R, an
  // exact identity, so the axis outer product is recovered without
  // cancellation near pi.
  const Mat3 outer =
      (0.5 * (R + R.transpose()) - cos_theta * Mat3::Identity()) /
      (1.0 - cos_theta);
  int k = 0;
  outer.diagonal().maxCoeff(&k);
  Vec3 axis = outer.col(k) / std::sqrt(std::max(outer(k, k), 1e-30));
  axis.normalize();
  if (w.dot(axis) < 0.0) axis = -axis;
  return theta * axis;
}

/// Frobenius distance of R^T R from the identity.
inline double orthonormality_error(const Mat3& R) {
  return (R.transpose() * R - Mat3::Identity()).norm();
}

inline bool is_rotation(const Mat3& R, double tol = 1e-9) {
  return orthonormality_error(R) <= tol &&
         std::abs(R.determinant() - 1.0) <= tol;
}

/// Gram-Schmidt renormalization, applied after long products once the
/// orthonormality error exceeds 1e-7.
inline Mat3 renormalize_rotation(const Mat3& R) {
  Vec3 c0 = R.col(0).normalized();
  Vec3 c1 = (R.col(1) - c0 * c0.dot(R.col(1))).normalized();
  Vec3 c2 = c0.cross(c1);
  Mat3 out;
  out << c0, c1, c2;
  return out;
}

inline Pose inverse_se3(const Pose& a) {
  Pose out;
  out.R = a.R.transpose();
  out.p = -(a.R.transpose() * a.p);
  return out;
}

/// Composition A * B, equivalent to the 4x4 homogeneous matrix product.
inline Pose compose_se3(const Pose& a, const Pose& b) {
  Pose out;
  out.R = a.R * b.R;
  out.p = a.R * b.p + a.p;
  return out;
}

/// Right-difference A (-) B: components of A^-1 * B.
/// Zero twist iff A equals B.
inline Twist relative_se3(const Pose& a, const Pose& b) {
  const Pose rel = compose_se3(inverse_se3(a), b);
  Twist t;
  t.rot = log_so3(rel.R);
  t.trans = rel.p;
  return t;
}

/// Geodesic angle between two rotations.
inline double rotation_distance(const Mat3& a, const Mat3& b) {
  return log_so3(a.transpose() * b).norm();
}

}  // namespace sio

#endif  // SIO_GEOM_HPP
