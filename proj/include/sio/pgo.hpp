// Pose-graph construction, the fixed-weight training cost, the
// confidence-adaptive inference cost and a Levenberg-Marquardt solver on
// the SE(3) x R^3 state manifold.

#ifndef SIO_PGO_HPP
#define SIO_PGO_HPP

#include <string>
#include <vector>

#include "sio/geom.hpp"
#include "sio/imu.hpp"

namespace sio {

struct GraphNode {
  NavState state;
  int index = 0;
};

/// Relative-pose constraint between consecutive nodes (i, i+1) from scan
/// registration, with its symmetric overlap score.
struct IcpEdge {
  int i = 0;
  Pose dT;
  double overlap = 1.0;
};

/// Preintegrated inertial constraint between consecutive nodes (i, i+1).
/// dt is the wall-clock span the gravity terms integrate over.
struct ImuEdge {
  int i = 0;
  PreintDelta delta;
  double dt = 0.0;
};

/// w1..w4: fixed diagonal information weights of the training cost
/// (scan pose, inertial rotation/velocity/position). kappa/tau: scan and
/// inertial confidence scale factors of the adaptive inference cost.
struct InfoWeights {
  double w1 = 10.0, w2 = 1.0, w3 = 1.0, w4 = 1.0;
  double kappa_r = 1.0, kappa_p = 1.0;
  double tau_R = 1.0, tau_v = 1.0, tau_p = 1.0;

  void validate() const;
};

struct SolverConfig {
  int max_iterations = 50;
  double initial_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.5;
  double cost_tol = 1e-14;
  double step_tol = 1e-10;
  double jacobian_step = 1e-6;

  void validate() const;
};

struct PoseGraph {
  std::vector<GraphNode> nodes;
  std::vector<IcpEdge> icp_edges;
  std::vector<ImuEdge> imu_edges;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);

  /// Checks contiguous node indices and consecutive-node edge references.
  void validate() const;
};

enum class CostKind { Training, Inference };

struct CostEval {
  double cost = 0.0;
  VecX residual;  // weighted; cost == residual.squaredNorm()
};

/// Fixed-weight cost: the scan edge residual is the 6-dof log of
/// dT_icp^-1 * dT_pgo under w1; inertial residuals compare the preintegrated
/// increments against the de-gravitated relative quantities implied by the
/// node states, under w2/w3/w4.
CostEval training_cost(const PoseGraph& graph, const InfoWeights& w);

/// Confidence-adaptive cost: scan residuals scaled by overlap * kappa
/// (rotation and translation parts separately), inertial residuals whitened
/// by the block-inverse of the edge covariance and scaled by tau.
/// Throws on a singular covariance block.
CostEval inference_cost(const PoseGraph& graph, const InfoWeights& w);

/// Central-difference Jacobian of the weighted residual with respect to the
/// local coordinates (rotation vector, velocity, position) of nodes 1..N-1.
MatX numeric_jacobian(const PoseGraph& graph, const InfoWeights& w,
                      CostKind kind, double step);

struct SolveReport {
  int iterations = 0;
  int accepted_steps = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
  std::string reason;
};

/// Levenberg-Marquardt over all nodes except node 0 (gauge anchor).
/// Rotation updates apply right-multiplicatively through exp_so3. Accepted
/// steps strictly decrease the cost; terminates on cost tolerance, step
/// tolerance or the iteration cap.
SolveReport solve_lm(PoseGraph& graph, const InfoWeights& w, CostKind kind,
                     const SolverConfig& cfg);

/// Line-oriented text dump; exact round trip.
void save_graph(const PoseGraph& graph, const std::string& path);
PoseGraph load_graph(const std::string& path);

}  // namespace sio

#endif  // SIO_PGO_HPP
