// Selective fusion of scan-registration and graph-optimized relative poses
// via symmetric overlap scores, and propagation into supervisory
// world-frame states.

#ifndef SIO_PSEUDOLABEL_HPP
#define SIO_PSEUDOLABEL_HPP

#include <string>
#include <vector>

#include "sio/imu.hpp"
#include "sio/registration.hpp"

namespace sio {

enum class LabelSource { Icp, Pgo };

/// Chosen relative transform for one segment plus both overlap scores and
/// the derived world-frame supervisory state at segment end.
struct PseudoLabel {
  double t_i = 0.0;
  double t_next = 0.0;
  Pose dT;
  LabelSource source = LabelSource::Icp;
  double s_icp = 0.0;
  double s_pgo = 0.0;
  NavState derived;  // world frame at t_next
};

struct SourceSelection {
  Pose dT;
  LabelSource source = LabelSource::Icp;
  double s_icp = 0.0;
  double s_pgo = 0.0;
};

/// Scores both candidate transforms with the symmetric overlap and returns
/// the higher-scoring one. Exact ties prefer the registration result.
SourceSelection select_source(const Pose& dT_icp, const Pose& dT_pgo,
                              const PointCloud& p_i, const PointCloud& p_next,
                              double tau);

/// Propagates the pose chain one segment: T_next = T_i * dT, with the
/// velocity label as the position finite difference over dt.
/// Throws for dt <= 0.
std::pair<Pose, Vec3> make_pseudo_states(const Pose& T_i, const Pose& dT,
                                         double dt);

/// Labels for a whole sequence, anchored at the initial state.
struct LabelSet {
  NavState init;
  std::vector<PseudoLabel> labels;
};

/// Line-oriented text table consumed by the correction trainer.
/// Exact round trip.
void save_labels(const LabelSet& set, const std::string& path);
LabelSet load_labels(const std::string& path);

}  // namespace sio

#endif  // SIO_PSEUDOLABEL_HPP
