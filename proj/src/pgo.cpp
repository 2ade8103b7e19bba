#include "sio/pgo.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sio/util.hpp"

namespace sio {

void InfoWeights::validate() const {
  for (double v : {w1, w2, w3, w4, kappa_r, kappa_p, tau_R, tau_v, tau_p})
    if (!(v > 0.0))
      throw std::invalid_argument("InfoWeights: all values must be positive");
}

void SolverConfig::validate() const {
  if (max_iterations <= 0 || !(initial_lambda > 0.0) || !(cost_tol > 0.0) ||
      !(step_tol > 0.0) || !(jacobian_step > 0.0))
    throw std::invalid_argument("SolverConfig: values must be positive");
  if (!(lambda_up > 1.0) || !(lambda_down > 0.0) || !(lambda_down < 1.0))
    throw std::invalid_argument(
        "SolverConfig: need lambda_up > 1 > lambda_down > 0");
}

void PoseGraph::validate() const {
  if (nodes.size() < 2)
    throw std::invalid_argument("PoseGraph: needs at least 2 nodes");
  for (std::size_t k = 0; k < nodes.size(); ++k)
    if (nodes[k].index != static_cast<int>(k))
      throw std::invalid_argument("PoseGraph: node indices must be 0..N-1");
  const int n = static_cast<int>(nodes.size());
  for (const auto& e : icp_edges)
    if (e.i < 0 || e.i + 1 >= n)
      throw std::invalid_argument("PoseGraph: scan edge index out of range");
  for (const auto& e : imu_edges)
    if (e.i < 0 || e.i + 1 >= n)
      throw std::invalid_argument("PoseGraph: inertial edge index out of range");
}

namespace {

// Per-edge whitening factors, fixed over a solve.
struct Prepared {
  CostKind kind = CostKind::Training;
  // Inference only: lower Cholesky factors of the covariance blocks.
  std::vector<Mat3> L_r, L_v, L_p;
};

Prepared prepare(const PoseGraph& graph, CostKind kind) {
  Prepared prep;
  prep.kind = kind;
  if (kind != CostKind::Inference) return prep;
  prep.L_r.reserve(graph.imu_edges.size());
  prep.L_v.reserve(graph.imu_edges.size());
  prep.L_p.reserve(graph.imu_edges.size());
  for (const auto& e : graph.imu_edges) {
    const Mat3 blocks[3] = {e.delta.cov.block<3, 3>(0, 0),
                            e.delta.cov.block<3, 3>(3, 3),
                            e.delta.cov.block<3, 3>(6, 6)};
    Mat3 factors[3];
    for (int b = 0; b < 3; ++b) {
      Eigen::LLT<Mat3> llt(blocks[b]);
      if (llt.info() != Eigen::Success ||
          Mat3(llt.matrixL()).diagonal().minCoeff() < 1e-150)
        throw std::invalid_argument(
            "inference_cost: degenerate covariance block on edge " +
            std::to_string(e.i));
      factors[b] = llt.matrixL();
    }
    prep.L_r.push_back(factors[0]);
    prep.L_v.push_back(factors[1]);
    prep.L_p.push_back(factors[2]);
  }
  return prep;
}

int residual_size(const PoseGraph& graph) {
  return 6 * static_cast<int>(graph.icp_edges.size()) +
         9 * static_cast<int>(graph.imu_edges.size());
}

// De-gravitated relative quantities implied by two consecutive node states
// (the algebraic inverse of the world-frame propagation).
struct RelativeStates {
  Mat3 dR;
  Vec3 dv;
  Vec3 dp;
};

RelativeStates relative_from_nodes(const NavState& a, const NavState& b,
                                   const Vec3& g, double dt) {
  RelativeStates rel;
  rel.dR = a.R.transpose() * b.R;
  rel.dv = a.R.transpose() * (b.v - a.v - g * dt);
  rel.dp = a.R.transpose() * (b.p - a.p - a.v * dt - 0.5 * g * dt * dt);
  return rel;
}

void residual_into(const PoseGraph& graph, const InfoWeights& w,
                   const Prepared& prep, VecX& out) {
  int row = 0;
  for (const auto& e : graph.icp_edges) {
    const NavState& a = graph.nodes[e.i].state;
    const NavState& b = graph.nodes[e.i + 1].state;
    const Pose pgo{a.R.transpose() * b.R, a.R.transpose() * (b.p - a.p)};
    const Twist r = relative_se3(e.dT, pgo);
    if (prep.kind == CostKind::Training) {
      out.segment<6>(row) = std::sqrt(w.w1) * r.vec();
    } else {
      out.segment<3>(row) = std::sqrt(e.overlap * w.kappa_r) * r.rot;
      out.segment<3>(row + 3) = std::sqrt(e.overlap * w.kappa_p) * r.trans;
    }
    row += 6;
  }
  for (std::size_t k = 0; k < graph.imu_edges.size(); ++k) {
    const auto& e = graph.imu_edges[k];
    const auto rel = relative_from_nodes(graph.nodes[e.i].state,
                                         graph.nodes[e.i + 1].state,
                                         graph.gravity, e.dt);
    const Vec3 r_rot = log_so3(e.delta.dR.transpose() * rel.dR);
    const Vec3 r_vel = e.delta.dv - rel.dv;
    const Vec3 r_pos = e.delta.dp - rel.dp;
    if (prep.kind == CostKind::Training) {
      out.segment<3>(row) = std::sqrt(w.w2) * r_rot;
      out.segment<3>(row + 3) = std::sqrt(w.w3) * r_vel;
      out.segment<3>(row + 6) = std::sqrt(w.w4) * r_pos;
    } else {
      // ||r||^2_{S^-1} = ||L^-1 r||^2 with S = L L^T.
      out.segment<3>(row) = std::sqrt(w.tau_R) *
                            prep.L_r[k].triangularView<Eigen::Lower>().solve(r_rot);
      out.segment<3>(row + 3) =
          std::sqrt(w.tau_v) *
          prep.L_v[k].triangularView<Eigen::Lower>().solve(r_vel);
      out.segment<3>(row + 6) =
          std::sqrt(w.tau_p) *
          prep.L_p[k].triangularView<Eigen::Lower>().solve(r_pos);
    }
    row += 9;
  }
}

CostEval evaluate(const PoseGraph& graph, const InfoWeights& w,
                  CostKind kind) {
  graph.validate();
  w.validate();
  const Prepared prep = prepare(graph, kind);
  CostEval eval;
  eval.residual.resize(residual_size(graph));
  residual_into(graph, w, prep, eval.residual);
  eval.cost = eval.residual.squaredNorm();
  return eval;
}

void apply_step(PoseGraph& graph, const VecX& delta) {
  for (std::size_t n = 1; n < graph.nodes.size(); ++n) {
    const int off = 9 * (static_cast<int>(n) - 1);
    NavState& s = graph.nodes[n].state;
    s.R = s.R * exp_so3(delta.segment<3>(off));
    if (orthonormality_error(s.R) > 1e-7) s.R = renormalize_rotation(s.R);
    s.v += delta.segment<3>(off + 3);
    s.p += delta.segment<3>(off + 6);
  }
}

}  // namespace

CostEval training_cost(const PoseGraph& graph, const InfoWeights& w) {
  return evaluate(graph, w, CostKind::Training);
}

CostEval inference_cost(const PoseGraph& graph, const InfoWeights& w) {
  return evaluate(graph, w, CostKind::Inference);
}

MatX numeric_jacobian(const PoseGraph& graph, const InfoWeights& w,
                      CostKind kind, double step) {
  graph.validate();
  w.validate();
  if (!(step > 0.0))
    throw std::invalid_argument("numeric_jacobian: step must be positive");
  const Prepared prep = prepare(graph, kind);
  const int rows = residual_size(graph);
  const int cols = 9 * (static_cast<int>(graph.nodes.size()) - 1);
  MatX jac(rows, cols);
  VecX plus(rows), minus(rows);
  PoseGraph scratch = graph;
  for (int c = 0; c < cols; ++c) {
    VecX delta = VecX::Zero(cols);
    delta[c] = step;
    scratch.nodes = graph.nodes;
    apply_step(scratch, delta);
    residual_into(scratch, w, prep, plus);
    delta[c] = -step;
    scratch.nodes = graph.nodes;
    apply_step(scratch, delta);
    residual_into(scratch, w, prep, minus);
    jac.col(c) = (plus - minus) / (2.0 * step);
  }
  return jac;
}

SolveReport solve_lm(PoseGraph& graph, const InfoWeights& w, CostKind kind,
                     const SolverConfig& cfg) {
  graph.validate();
  w.validate();
  cfg.validate();
  const Prepared prep = prepare(graph, kind);
  const int rows = residual_size(graph);
  const int cols = 9 * (static_cast<int>(graph.nodes.size()) - 1);

  SolveReport report;
  VecX res(rows);
  residual_into(graph, w, prep, res);
  if (!res.allFinite())
    throw std::runtime_error("solve_lm: non-finite residual at initial state");
  double cost = res.squaredNorm();
  report.initial_cost = cost;

  if (cost <= cfg.cost_tol) {
    report.final_cost = cost;
    report.converged = true;
    report.reason = "cost tolerance at initial state";
    return report;
  }
  if (rows == 0 || cols == 0) {
    report.final_cost = cost;
    report.converged = true;
    report.reason = "nothing to optimize";
    return report;
  }

  double lambda = cfg.initial_lambda;
  VecX trial_res(rows);
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    report.iterations = iter + 1;
    const MatX jac = numeric_jacobian(graph, w, kind, cfg.jacobian_step);
    const MatX hessian = jac.transpose() * jac;
    const VecX gradient = jac.transpose() * res;

    while (true) {
      MatX damped = hessian;
      damped.diagonal().array() += lambda;
      const VecX delta = damped.ldlt().solve(-gradient);
      if (!delta.allFinite())
        throw std::runtime_error("solve_lm: linear solve produced non-finite step");

      PoseGraph trial = graph;
      apply_step(trial, delta);
      residual_into(trial, w, prep, trial_res);
      if (!trial_res.allFinite())
        throw std::runtime_error("solve_lm: non-finite residual in trial step");
      const double trial_cost = trial_res.squaredNorm();

      if (trial_cost < cost) {
        graph.nodes = std::move(trial.nodes);
        res = trial_res;
        cost = trial_cost;
        lambda = std::max(lambda * cfg.lambda_down, 1e-14);
        ++report.accepted_steps;
        if (cost <= cfg.cost_tol) {
          report.final_cost = cost;
          report.converged = true;
          report.reason = "cost tolerance";
          return report;
        }
        if (delta.norm() < cfg.step_tol) {
          report.final_cost = cost;
          report.converged = true;
          report.reason = "step tolerance";
          return report;
        }
        break;
      }
      if (delta.norm() < cfg.step_tol) {
        report.final_cost = cost;
        report.converged = true;
        report.reason = "step tolerance (no further decrease)";
        return report;
      }
      lambda *= cfg.lambda_up;
      if (lambda > 1e14) {
        report.final_cost = cost;
        report.converged = false;
        report.reason = "damping exhausted";
        return report;
      }
    }
  }
  report.final_cost = cost;
  report.converged = false;
  report.reason = "iteration cap";
  return report;
}

void save_graph(const PoseGraph& graph, const std::string& path) {
  graph.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write graph file '" + path + "'");
  os << "#graph v1\n";
  auto put_mat = [&os](const Mat3& m) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) os << ' ' << fmt_double(m(r, c));
  };
  auto put_vec = [&os](const Vec3& v) {
    for (int i = 0; i < 3; ++i) os << ' ' << fmt_double(v[i]);
  };
  os << "gravity";
  put_vec(graph.gravity);
  os << '\n';
  for (const auto& n : graph.nodes) {
    os << "node " << n.index << ' ' << fmt_double(n.state.t);
    put_mat(n.state.R);
    put_vec(n.state.v);
    put_vec(n.state.p);
    os << '\n';
  }
  for (const auto& e : graph.icp_edges) {
    os << "icp " << e.i;
    put_mat(e.dT.R);
    put_vec(e.dT.p);
    os << ' ' << fmt_double(e.overlap) << '\n';
  }
  for (const auto& e : graph.imu_edges) {
    os << "imu " << e.i << ' ' << fmt_double(e.dt);
    put_mat(e.delta.dR);
    put_vec(e.delta.dv);
    put_vec(e.delta.dp);
    for (int r = 0; r < 9; ++r)
      for (int c = 0; c < 9; ++c) os << ' ' << fmt_double(e.delta.cov(r, c));
    os << '\n';
  }
}

PoseGraph load_graph(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read graph file '" + path + "'");
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + why);
  };
  std::getline(is, line);
  ++lineno;
  if (line != "#graph v1") fail("missing '#graph v1' header");

  PoseGraph graph;
  while (std::getline(is, line)) {
    ++lineno;
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    auto num = [&](std::size_t i) { return parse_double(toks.at(i)); };
    auto get_mat = [&](std::size_t off) {
      Mat3 m;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = num(off + 3 * r + c);
      return m;
    };
    auto get_vec = [&](std::size_t off) {
      return Vec3(num(off), num(off + 1), num(off + 2));
    };
    try {
      if (toks[0] == "gravity" && toks.size() == 4) {
        graph.gravity = get_vec(1);
      } else if (toks[0] == "node" && toks.size() == 18) {
        GraphNode n;
        n.index = static_cast<int>(num(1));
        n.state.t = num(2);
        n.state.R = get_mat(3);
        n.state.v = get_vec(12);
        n.state.p = get_vec(15);
        graph.nodes.push_back(n);
      } else if (toks[0] == "icp" && toks.size() == 15) {
        IcpEdge e;
        e.i = static_cast<int>(num(1));
        e.dT.R = get_mat(2);
        e.dT.p = get_vec(11);
        e.overlap = num(14);
        graph.icp_edges.push_back(e);
      } else if (toks[0] == "imu" && toks.size() == 99) {
        ImuEdge e;
        e.i = static_cast<int>(num(1));
        e.dt = num(2);
        e.delta.dR = get_mat(3);
        e.delta.dv = get_vec(12);
        e.delta.dp = get_vec(15);
        for (int r = 0; r < 9; ++r)
          for (int c = 0; c < 9; ++c) e.delta.cov(r, c) = num(18 + 9 * r + c);
        graph.imu_edges.push_back(e);
      } else {
        fail("unrecognized record '" + toks[0] + "' with " +
             std::to_string(toks.size()) + " fields");
      }
    } catch (const std::out_of_range&) {
      fail("truncated record");
    }
  }
  graph.validate();
  return graph;
}

}  // namespace sio
