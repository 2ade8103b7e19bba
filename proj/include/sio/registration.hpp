// Point-to-point ICP between consecutive scans and the symmetric overlap
// score used for pseudo-label selection and adaptive weighting.

#ifndef SIO_REGISTRATION_HPP
#define SIO_REGISTRATION_HPP

#include <string>
#include <vector>

#include "sio/geom.hpp"

namespace sio {

struct PointCloud {
  std::vector<Vec3> points;
  std::string frame;  // optional tag

  /// Throws on an empty cloud or non-finite coordinates.
  void validate() const;
  std::size_t size() const { return points.size(); }
};

/// Exact nearest-neighbor index over a fixed point set. Ties in distance
/// resolve to the lowest point index, matching a brute-force linear scan
/// exactly. Read-only after construction and shareable across threads.
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3>& points);

  /// Returns (point index, squared distance). exclude skips one index,
  /// which self-spacing queries use.
  std::pair<int, double> nearest(const Vec3& query, int exclude = -1) const;

  std::size_t size() const { return pts_.size(); }

 private:
  struct Node {
    int axis = -1;        // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
  };

  int build(int begin, int end);
  void search(int node, const Vec3& q, int exclude, int& best_idx,
              double& best_d2) const;

  std::vector<Vec3> pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct IcpConfig {
  int max_iterations = 50;
  double correspondence_cutoff = 1.0;  // meters
  double convergence_tol = 1e-6;       // norm of the incremental update
  double overlap_tau = 0.0;            // meters; <= 0 selects the default
};

struct IcpResult {
  Pose transform;        // maps source-frame points into the target frame
  double rms = 0.0;      // final residual over the used correspondences
  int iterations = 0;
  bool converged = false;
  std::string diagnostic;
};

/// Iterates nearest-neighbor correspondence (within the cutoff) and the
/// closed-form rigid alignment (centroids + SVD of the cross-covariance)
/// until the incremental update drops below tol or the iteration cap.
///
/// Fewer than 3 correspondences in an iteration yields a not-converged
/// result with a diagnostic. Clouds under 10 points are rejected.
IcpResult icp_align(const PointCloud& source, const PointCloud& target,
                    const Pose& init, const IcpConfig& cfg);

/// Fraction of points in p whose nearest neighbor in q lies within tau.
double overlap_ratio(const PointCloud& p, const PointCloud& q, double tau);

/// 0.5 [O(P_i, dT * P_next) + O(P_next, dT^-1 * P_i)]: the mean of the two
/// directed overlaps after mapping each cloud into the other frame.
double symmetric_overlap(const Pose& dT, const PointCloud& p_i,
                         const PointCloud& p_next, double tau);

PointCloud transform_cloud(const Pose& T, const PointCloud& cloud);

/// Median nearest-neighbor spacing within the cloud.
double median_point_spacing(const PointCloud& cloud);

/// Default overlap threshold: twice the median point spacing of the cloud.
double default_overlap_tau(const PointCloud& cloud);

/// ASCII "x y z" per line. Malformed lines raise with the line number.
PointCloud read_cloud_xyz(const std::string& path);

/// ASCII PLY with at least float x/y/z vertex properties.
PointCloud read_cloud_ply(const std::string& path);

/// Dispatches on the .xyz / .ply extension.
PointCloud read_cloud(const std::string& path);

void write_cloud_xyz(const PointCloud& cloud, const std::string& path);

}  // namespace sio

#endif  // SIO_REGISTRATION_HPP
