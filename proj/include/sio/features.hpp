// Fixed 12-dimensional summary of an IMU window, shared by the correction
// model inputs and the motion descriptors.

#ifndef SIO_FEATURES_HPP
#define SIO_FEATURES_HPP

#include "sio/imu.hpp"

namespace sio {

inline constexpr int kWindowFeatureDim = 12;

using FeatureVec = Eigen::Matrix<double, kWindowFeatureDim, 1>;

/// Per sensor (gyro, accel): mean absolute value of each component, then
/// standard deviation of each component's first differences. Captures both
/// the level and the temporal variation of the window.
///
/// Layout: [mean|w_xyz|, std(diff w_xyz), mean|a_xyz|, std(diff a_xyz)].
/// Throws std::invalid_argument for windows with fewer than 4 samples.
FeatureVec window_features(const ImuSegment& seg);

}  // namespace sio

#endif  // SIO_FEATURES_HPP
