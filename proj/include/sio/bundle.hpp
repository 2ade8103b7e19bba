// In-memory sensor sequence (IMU stream, scans, optional ground truth) and
// its on-disk layout:
//   imu.csv        header "t,wx,wy,wz,ax,ay,az", SI units
//   scans.txt      "<t> <relative cloud path>" per scan
//   scans/*.xyz    ASCII clouds
//   gt.tum         ground-truth poses (TUM format), optional
//   gt_states.csv  ground-truth states incl. velocity, optional
//   meta.json      rates, gravity, extrinsics, format version

#ifndef SIO_BUNDLE_HPP
#define SIO_BUNDLE_HPP

#include <optional>
#include <string>
#include <vector>

#include "sio/eval.hpp"
#include "sio/imu.hpp"
#include "sio/registration.hpp"

namespace sio {

struct Scan {
  double t = 0.0;
  PointCloud cloud;  // sensor frame at scan time
};

struct SequenceMeta {
  double imu_rate_hz = 200.0;
  double scan_rate_hz = 5.0;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  Eigen::Matrix4d extrinsics = Eigen::Matrix4d::Identity();
};

struct SequenceBundle {
  std::vector<ImuSample> imu;
  std::vector<Scan> scans;
  std::optional<Trajectory> ground_truth;
  SequenceMeta meta;

  /// Checks ordering and that every scan timestamp is bracketed by IMU
  /// samples; names the offending scan otherwise.
  void validate() const;
};

/// Writes all artifacts into dir (created if missing). Deterministic: the
/// same bundle always produces byte-identical files.
void export_bundle(const SequenceBundle& bundle, const std::string& dir);

/// Loads and validates a bundle directory. Parse failures report file and
/// line.
SequenceBundle ingest_bundle(const std::string& dir);

/// Extended state table io (t, R row-major, v, p per line); keeps exact
/// velocities across stages, which TUM files cannot carry.
void save_states_csv(const Trajectory& traj, const std::string& path);
Trajectory load_states_csv(const std::string& path);

}  // namespace sio

#endif  // SIO_BUNDLE_HPP
