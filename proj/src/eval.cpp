#include "sio/eval.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sio/util.hpp"

namespace sio {

void Trajectory::validate() const {
  if (states.empty()) throw std::invalid_argument("Trajectory: empty");
  for (std::size_t i = 1; i < states.size(); ++i)
    if (!(states[i].t > states[i - 1].t))
      throw std::invalid_argument(
          "Trajectory: timestamps must be strictly increasing");
}

std::optional<NavState> state_at(const Trajectory& traj, double t,
                                 double tol) {
  const auto& s = traj.states;
  const auto it = std::lower_bound(
      s.begin(), s.end(), t,
      [](const NavState& a, double value) { return a.t < value; });
  const NavState* best = nullptr;
  if (it != s.end()) best = &*it;
  if (it != s.begin()) {
    const NavState* prev = &*(it - 1);
    if (!best || std::abs(prev->t - t) < std::abs(best->t - t)) best = prev;
  }
  if (!best || std::abs(best->t - t) > tol) return std::nullopt;
  return *best;
}

double ape(const Trajectory& est, const Trajectory& gt, double assoc_tol) {
  est.validate();
  gt.validate();
  double acc = 0.0;
  int count = 0;
  for (const auto& s : est.states) {
    const auto ref = state_at(gt, s.t, assoc_tol);
    if (!ref) continue;
    acc += (s.p - ref->p).norm();
    ++count;
  }
  if (count == 0)
    throw std::invalid_argument("ape: no timestamp-associated pose pairs");
  return acc / static_cast<double>(count);
}

double rpe_fixed_interval(const std::vector<IntervalSegment>& est,
                          const Trajectory& gt, double assoc_tol,
                          RpeDiagnostics* diag) {
  gt.validate();
  double acc = 0.0;
  RpeDiagnostics local;
  for (const auto& seg : est) {
    const auto gt_start = state_at(gt, seg.start.t, assoc_tol);
    const auto gt_end = state_at(gt, seg.end.t, assoc_tol);
    if (!gt_start || !gt_end) {
      ++local.skipped;
      continue;
    }
    const Vec3 gt_disp = gt_end->p - gt_start->p;
    const Vec3 est_disp_aligned =
        gt_start->R * seg.start.R.transpose() * (seg.end.p - seg.start.p);
    acc += (gt_disp - est_disp_aligned).norm();
    ++local.used;
  }
  if (diag) *diag = local;
  if (local.used == 0)
    throw std::invalid_argument("rpe: no interval with both endpoints");
  return acc / static_cast<double>(local.used);
}

void save_tum(const Trajectory& traj, const std::string& path) {
  traj.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write trajectory '" + path + "'");
  for (const auto& s : traj.states) {
    Eigen::Quaterniond q(s.R);
    q.normalize();
    os << fmt_double(s.t) << ' ' << fmt_double(s.p.x()) << ' '
       << fmt_double(s.p.y()) << ' ' << fmt_double(s.p.z()) << ' '
       << fmt_double(q.x()) << ' ' << fmt_double(q.y()) << ' '
       << fmt_double(q.z()) << ' ' << fmt_double(q.w()) << '\n';
  }
}

Trajectory load_tum(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read trajectory '" + path + "'");
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto toks = split_ws(line);
    if (toks.size() != 8)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 8 fields (t x y z qx qy qz qw)");
    try {
      NavState s;
      s.t = parse_double(toks[0]);
      s.p = Vec3(parse_double(toks[1]), parse_double(toks[2]),
                 parse_double(toks[3]));
      Eigen::Quaterniond q(parse_double(toks[7]), parse_double(toks[4]),
                           parse_double(toks[5]), parse_double(toks[6]));
      q.normalize();
      s.R = q.toRotationMatrix();
      traj.states.push_back(s);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  traj.validate();
  return traj;
}

}  // namespace sio
