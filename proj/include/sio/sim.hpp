// Synthetic-sequence simulator: smooth analytic ground-truth trajectories,
// exact-kinematics IMU signals (plus configured bias and seeded Gaussian
// noise) and per-scan point clouds of a random landmark world.

#ifndef SIO_SIM_HPP
#define SIO_SIM_HPP

#include <cstdint>
#include <string>

#include "sio/bundle.hpp"

namespace sio {

enum class TrajectoryRecipe { FigureEight, Polyline, RandomSmooth };

struct SimConfig {
  double duration_s = 120.0;
  double scan_rate_hz = 5.0;
  double imu_rate_hz = 200.0;
  TrajectoryRecipe trajectory = TrajectoryRecipe::FigureEight;
  Vec3 gyro_bias = Vec3::Zero();    // rad/s, added to every gyro sample
  Vec3 accel_bias = Vec3::Zero();   // m/s^2
  double gyro_noise_std = 0.0;      // rad/s, per sample
  double accel_noise_std = 0.0;     // m/s^2, per sample
  int landmark_count = 8000;
  double room_extent_m = 40.0;      // horizontal extent of the landmark box
  double sensing_range_m = 18.0;
  int points_per_scan = 2000;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  std::uint64_t seed = 1;

  /// Positive rates and imu_rate >= 10 * scan_rate.
  void validate() const;
};

/// Exact kinematic state of the analytic trajectory at time t.
struct TrajectorySample {
  Mat3 R = Mat3::Identity();  // body to world
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();           // world-frame acceleration
  Vec3 omega_body = Vec3::Zero();  // body-frame angular velocity
};

/// Closed-form trajectory evaluation (no integration involved); exposed so
/// tests can check kinematic consistency independently of the simulator.
TrajectorySample sample_trajectory(const SimConfig& cfg, double t);

/// Generates the full bundle: IMU stream at imu_rate (ideal specific force
/// and body rates, plus bias and seeded zero-mean Gaussian noise), scans at
/// scan_rate (landmarks within sensing range, expressed in the sensor frame,
/// nearest points kept when over the cap) and the exact ground truth.
/// Byte-reproducible for a fixed config.
SequenceBundle simulate(const SimConfig& cfg);

}  // namespace sio

#endif  // SIO_SIM_HPP
