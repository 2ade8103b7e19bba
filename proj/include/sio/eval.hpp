// Trajectory accuracy metrics: absolute position error and the
// fixed-interval, reinitialized relative position error, plus TUM-format
// trajectory I/O.

#ifndef SIO_EVAL_HPP
#define SIO_EVAL_HPP

#include <optional>
#include <string>
#include <vector>

#include "sio/imu.hpp"

namespace sio {

struct Trajectory {
  std::vector<NavState> states;

  /// Throws unless timestamps are strictly increasing.
  void validate() const;
  std::size_t size() const { return states.size(); }
};

/// Mean Euclidean position error over timestamp-associated pairs
/// (nearest neighbor within assoc_tol, no interpolation, no alignment).
/// Throws when no pair associates.
double ape(const Trajectory& est, const Trajectory& gt,
           double assoc_tol = 1e-3);

/// One per-interval estimate, re-run from the reference initial conditions;
/// start/end carry the estimated states at the interval boundaries.
struct IntervalSegment {
  NavState start;
  NavState end;
};

struct RpeDiagnostics {
  int used = 0;
  int skipped = 0;  // intervals without both ground-truth endpoints
};

/// Mean over intervals of
///   || (p_gt_end - p_gt_start) - R_gt_start R_est_start^T (p_est_end - p_est_start) ||
/// i.e. the ground-truth displacement against the estimated displacement
/// rotated into the ground-truth frame. Throws when no interval evaluates.
double rpe_fixed_interval(const std::vector<IntervalSegment>& est,
                          const Trajectory& gt, double assoc_tol = 1e-3,
                          RpeDiagnostics* diag = nullptr);

struct MetricsReport {
  double ape = 0.0;       // meters
  double rpe = 0.0;       // meters
  double interval = 0.0;  // seconds, RPE protocol
  int count = 0;          // associated pose pairs in the APE
  int rpe_count = 0;      // evaluated intervals
  int rpe_skipped = 0;
};

/// TUM format: "t x y z qx qy qz qw" per line. The quaternion/matrix
/// conversion round-trips within 1e-9.
void save_tum(const Trajectory& traj, const std::string& path);
Trajectory load_tum(const std::string& path);

/// Nearest state by timestamp, within tol.
std::optional<NavState> state_at(const Trajectory& traj, double t,
                                 double tol);

}  // namespace sio

#endif  // SIO_EVAL_HPP
