#include "sio/registration.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sio/util.hpp"

namespace sio {

void PointCloud::validate() const {
  if (points.empty()) throw std::invalid_argument("PointCloud: empty cloud");
  for (const auto& p : points)
    if (!p.allFinite())
      throw std::invalid_argument("PointCloud: non-finite coordinates");
}

KdTree::KdTree(const std::vector<Vec3>& points) : pts_(points) {
  order_.resize(pts_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!pts_.empty()) root_ = build(0, static_cast<int>(pts_.size()));
}

int KdTree::build(int begin, int end) {
  constexpr int kLeafSize = 8;
  Node node;
  if (end - begin <= kLeafSize) {
    node.begin = begin;
    node.end = end;
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }
  Vec3 lo = pts_[order_[begin]], hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(pts_[order_[i]]);
    hi = hi.cwiseMax(pts_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](int a, int b) {
                     return pts_[a][axis] != pts_[b][axis]
                                ? pts_[a][axis] < pts_[b][axis]
                                : a < b;
                   });
  node.axis = axis;
  node.split = pts_[order_[mid]][axis];
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void KdTree::search(int node_id, const Vec3& q, int exclude, int& best_idx,
                    double& best_d2) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[i];
      if (idx == exclude) continue;
      const double d2 = (pts_[idx] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
        best_d2 = d2;
        best_idx = idx;
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search(near, q, exclude, best_idx, best_d2);
  // Visit the far side on exact equality too, so tie-breaking on the lowest
  // index matches a brute-force scan.
  if (diff * diff <= best_d2) search(far, q, exclude, best_idx, best_d2);
}

std::pair<int, double> KdTree::nearest(const Vec3& query, int exclude) const {
  int best_idx = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  if (root_ >= 0) search(root_, query, exclude, best_idx, best_d2);
  return {best_idx, best_d2};
}

PointCloud transform_cloud(const Pose& T, const PointCloud& cloud) {
  PointCloud out;
  out.frame = cloud.frame;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) out.points.push_back(T.R * p + T.p);
  return out;
}

IcpResult icp_align(const PointCloud& source, const PointCloud& target,
                    const Pose& init, const IcpConfig& cfg) {
  source.validate();
  target.validate();
  if (source.size() < 10 || target.size() < 10)
    throw std::invalid_argument("icp_align: clouds must have >= 10 points");
  if (cfg.max_iterations <= 0 || cfg.correspondence_cutoff <= 0.0 ||
      cfg.convergence_tol <= 0.0)
    throw std::invalid_argument("icp_align: config values must be positive");

  const KdTree tree(target.points);
  const double cutoff2 = cfg.correspondence_cutoff * cfg.correspondence_cutoff;

  IcpResult result;
  result.transform = init;

  std::vector<Vec3> moved, matched;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    moved.clear();
    matched.clear();
    for (const auto& p : source.points) {
      const Vec3 q = result.transform.R * p + result.transform.p;
      const auto [idx, d2] = tree.nearest(q);
      if (idx >= 0 && d2 <= cutoff2) {
        moved.push_back(q);
        matched.push_back(target.points[idx]);
      }
    }
    result.iterations = iter + 1;
    if (moved.size() < 3) {
      result.converged = false;
      result.diagnostic = "only " + std::to_string(moved.size()) +
                          " correspondences within cutoff";
      return result;
    }

    Vec3 c_moved = Vec3::Zero(), c_matched = Vec3::Zero();
    for (std::size_t i = 0; i < moved.size(); ++i) {
      c_moved += moved[i];
      c_matched += matched[i];
    }
    c_moved /= static_cast<double>(moved.size());
    c_matched /= static_cast<double>(matched.size());

    Mat3 H = Mat3::Zero();
    for (std::size_t i = 0; i < moved.size(); ++i)
      H += (moved[i] - c_moved) * (matched[i] - c_matched).transpose();

    Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant();
    Pose incr;
    incr.R = svd.matrixV() * flip * svd.matrixU().transpose();
    incr.p = c_matched - incr.R * c_moved;

    result.transform = compose_se3(incr, result.transform);
    result.transform.R = renormalize_rotation(result.transform.R);

    const double update =
        std::sqrt(log_so3(incr.R).squaredNorm() + incr.p.squaredNorm());
    if (update < cfg.convergence_tol) {
      result.converged = true;
      break;
    }
  }

  // Residual over the correspondences at the final transform.
  double sq_sum = 0.0;
  std::size_t used = 0;
  for (const auto& p : source.points) {
    const Vec3 q = result.transform.R * p + result.transform.p;
    const auto [idx, d2] = tree.nearest(q);
    if (idx >= 0 && d2 <= cutoff2) {
      sq_sum += d2;
      ++used;
    }
  }
  result.rms = used ? std::sqrt(sq_sum / static_cast<double>(used)) : 0.0;
  if (!result.converged && result.diagnostic.empty())
    result.diagnostic = "iteration cap reached";
  return result;
}

double overlap_ratio(const PointCloud& p, const PointCloud& q, double tau) {
  p.validate();
  q.validate();
  if (!(tau > 0.0)) throw std::invalid_argument("overlap_ratio: tau <= 0");
  const KdTree tree(q.points);
  const double tau2 = tau * tau;
  std::size_t inside = 0;
  for (const auto& x : p.points) {
    const auto [idx, d2] = tree.nearest(x);
    if (idx >= 0 && d2 <= tau2) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(p.size());
}

double symmetric_overlap(const Pose& dT, const PointCloud& p_i,
                         const PointCloud& p_next, double tau) {
  const PointCloud next_in_i = transform_cloud(dT, p_next);
  const PointCloud i_in_next = transform_cloud(inverse_se3(dT), p_i);
  return 0.5 * (overlap_ratio(p_i, next_in_i, tau) +
                overlap_ratio(p_next, i_in_next, tau));
}

double median_point_spacing(const PointCloud& cloud) {
  cloud.validate();
  if (cloud.size() < 2)
    throw std::invalid_argument("median_point_spacing: needs >= 2 points");
  const KdTree tree(cloud.points);
  std::vector<double> d;
  d.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto [idx, d2] =
        tree.nearest(cloud.points[i], static_cast<int>(i));
    if (idx >= 0) d.push_back(std::sqrt(d2));
  }
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

double default_overlap_tau(const PointCloud& cloud) {
  return 2.0 * median_point_spacing(cloud);
}

static Vec3 parse_xyz_line(const std::string& line, const std::string& path,
                           int lineno, std::size_t min_fields) {
  const auto toks = split_ws(line);
  if (toks.size() < min_fields)
    throw std::runtime_error(path + ":" + std::to_string(lineno) +
                             ": expected at least " +
                             std::to_string(min_fields) + " fields");
  try {
    return Vec3(parse_double(toks[0]), parse_double(toks[1]),
                parse_double(toks[2]));
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                             e.what());
  }
}

PointCloud read_cloud_xyz(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open cloud file '" + path + "'");
  PointCloud cloud;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    cloud.points.push_back(parse_xyz_line(line, path, lineno, 3));
  }
  cloud.validate();
  return cloud;
}

PointCloud read_cloud_ply(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open cloud file '" + path + "'");
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + why);
  };

  std::getline(is, line);
  ++lineno;
  if (line.rfind("ply", 0) != 0) fail("not a PLY file");

  long vertex_count = -1;
  int xi = -1, yi = -1, zi = -1, prop = 0;
  bool in_vertex_element = false;
  while (std::getline(is, line)) {
    ++lineno;
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "format") {
      if (toks.size() < 2 || toks[1] != "ascii") fail("only ascii PLY supported");
    } else if (toks[0] == "element") {
      in_vertex_element = toks.size() >= 3 && toks[1] == "vertex";
      if (in_vertex_element) vertex_count = std::stol(toks[2]);
    } else if (toks[0] == "property" && in_vertex_element) {
      if (toks.size() >= 3) {
        if (toks[2] == "x") xi = prop;
        if (toks[2] == "y") yi = prop;
        if (toks[2] == "z") zi = prop;
      }
      ++prop;
    } else if (toks[0] == "end_header") {
      break;
    }
  }
  if (vertex_count < 0) fail("missing 'element vertex' declaration");
  if (xi < 0 || yi < 0 || zi < 0) fail("missing x/y/z vertex properties");

  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(vertex_count));
  for (long v = 0; v < vertex_count; ++v) {
    if (!std::getline(is, line)) fail("unexpected end of file in vertex data");
    ++lineno;
    const auto toks = split_ws(line);
    if (static_cast<int>(toks.size()) < prop)
      fail("expected " + std::to_string(prop) + " vertex fields");
    try {
      cloud.points.emplace_back(parse_double(toks[xi]), parse_double(toks[yi]),
                                parse_double(toks[zi]));
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }
  cloud.validate();
  return cloud;
}

PointCloud read_cloud(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply")
    return read_cloud_ply(path);
  return read_cloud_xyz(path);
}

void write_cloud_xyz(const PointCloud& cloud, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write cloud file '" + path + "'");
  for (const auto& p : cloud.points)
    os << fmt_double(p.x()) << ' ' << fmt_double(p.y()) << ' '
       << fmt_double(p.z()) << '\n';
}

}  // namespace sio
