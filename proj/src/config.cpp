#include "sio/config.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace sio {

using nlohmann::json;

namespace {

void check_keys(const json& node, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!node.is_object())
    throw std::invalid_argument("config: '" + path + "' must be an object");
  for (const auto& [key, _] : node.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return key == a; });
    if (!known)
      throw std::invalid_argument("config: unknown key '" + path + key + "'");
  }
}

void get(const json& node, const char* key, double& out) {
  if (!node.contains(key)) return;
  if (!node.at(key).is_number())
    throw std::invalid_argument(std::string("config: '") + key +
                                "' must be a number");
  out = node.at(key).get<double>();
}

void get(const json& node, const char* key, int& out) {
  if (node.contains(key)) out = node.at(key).get<int>();
}

void get(const json& node, const char* key, std::uint64_t& out) {
  if (node.contains(key)) out = node.at(key).get<std::uint64_t>();
}

void get(const json& node, const char* key, Vec3& out) {
  if (!node.contains(key)) return;
  const auto& a = node.at(key);
  if (!a.is_array() || a.size() != 3)
    throw std::invalid_argument(std::string("config: '") + key +
                                "' must be a 3-element array");
  out = Vec3(a.at(0).get<double>(), a.at(1).get<double>(),
             a.at(2).get<double>());
}

void get(const json& node, const char* key, std::vector<int>& out) {
  if (!node.contains(key)) return;
  const auto& a = node.at(key);
  if (!a.is_array() || a.empty())
    throw std::invalid_argument(std::string("config: '") + key +
                                "' must be a nonempty array");
  out.clear();
  for (const auto& v : a) out.push_back(v.get<int>());
}

TrajectoryRecipe parse_recipe(const std::string& name) {
  if (name == "figure-eight") return TrajectoryRecipe::FigureEight;
  if (name == "polyline") return TrajectoryRecipe::Polyline;
  if (name == "random-smooth") return TrajectoryRecipe::RandomSmooth;
  throw std::invalid_argument("config: unknown trajectory recipe '" + name +
                              "'");
}

std::string recipe_name(TrajectoryRecipe r) {
  switch (r) {
    case TrajectoryRecipe::FigureEight: return "figure-eight";
    case TrajectoryRecipe::Polyline: return "polyline";
    case TrajectoryRecipe::RandomSmooth: return "random-smooth";
  }
  return "figure-eight";
}

GradMode parse_grad_mode(const std::string& name) {
  if (name == "finite-difference") return GradMode::FiniteDifference;
  if (name == "analytic") return GradMode::Analytic;
  throw std::invalid_argument("config: unknown gradient mode '" + name + "'");
}

}  // namespace

void PipelineConfig::validate() const {
  sim.validate();
  weights.validate();
  solver.validate();
  if (chunk_nodes < 2)
    throw std::invalid_argument("config: chunk_nodes must be >= 2");
  if (!(train.train.epsilon > 0.0))
    throw std::invalid_argument("config: train.epsilon must be positive");
  if (train.train.epochs < 0 || train.hidden_width < 1)
    throw std::invalid_argument("config: bad train section");
  if (!(train.train.fd_step > 0.0))
    throw std::invalid_argument("config: train.fd_step must be positive");
  if (!(gmm.beta > 0.0 && gmm.beta < 1.0))
    throw std::invalid_argument("config: gmm.beta must lie in (0, 1)");
  if (!(gmm.window_s > 0.0) || !(eval.rpe_interval_s > 0.0) ||
      !(eval.assoc_tol_s > 0.0))
    throw std::invalid_argument("config: durations must be positive");
  if (icp.max_iterations <= 0 || !(icp.correspondence_cutoff > 0.0) ||
      !(icp.convergence_tol > 0.0))
    throw std::invalid_argument("config: bad icp section");
}

PipelineConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  check_keys(root, "",
             {"seed", "sim", "icp", "pgo", "train", "gmm", "eval"});

  PipelineConfig cfg;
  get(root, "seed", cfg.seed);

  if (root.contains("sim")) {
    const auto& s = root.at("sim");
    check_keys(s, "sim.",
               {"duration_s", "scan_rate_hz", "imu_rate_hz", "trajectory",
                "gyro_bias", "accel_bias", "gyro_noise_std", "accel_noise_std",
                "landmark_count", "room_extent_m", "sensing_range_m",
                "points_per_scan", "gravity"});
    get(s, "duration_s", cfg.sim.duration_s);
    get(s, "scan_rate_hz", cfg.sim.scan_rate_hz);
    get(s, "imu_rate_hz", cfg.sim.imu_rate_hz);
    if (s.contains("trajectory"))
      cfg.sim.trajectory = parse_recipe(s.at("trajectory").get<std::string>());
    get(s, "gyro_bias", cfg.sim.gyro_bias);
    get(s, "accel_bias", cfg.sim.accel_bias);
    get(s, "gyro_noise_std", cfg.sim.gyro_noise_std);
    get(s, "accel_noise_std", cfg.sim.accel_noise_std);
    get(s, "landmark_count", cfg.sim.landmark_count);
    get(s, "room_extent_m", cfg.sim.room_extent_m);
    get(s, "sensing_range_m", cfg.sim.sensing_range_m);
    get(s, "points_per_scan", cfg.sim.points_per_scan);
    get(s, "gravity", cfg.sim.gravity);
  }
  if (root.contains("icp")) {
    const auto& s = root.at("icp");
    check_keys(s, "icp.",
               {"max_iterations", "correspondence_cutoff_m", "convergence_tol",
                "overlap_tau_m"});
    get(s, "max_iterations", cfg.icp.max_iterations);
    get(s, "correspondence_cutoff_m", cfg.icp.correspondence_cutoff);
    get(s, "convergence_tol", cfg.icp.convergence_tol);
    get(s, "overlap_tau_m", cfg.icp.overlap_tau);
  }
  if (root.contains("pgo")) {
    const auto& s = root.at("pgo");
    check_keys(s, "pgo.",
               {"w1", "w2", "w3", "w4", "kappa_r", "kappa_p", "tau_R", "tau_v",
                "tau_p", "max_iterations", "initial_lambda", "lambda_up",
                "lambda_down", "cost_tol", "step_tol", "jacobian_step",
                "chunk_nodes"});
    get(s, "w1", cfg.weights.w1);
    get(s, "w2", cfg.weights.w2);
    get(s, "w3", cfg.weights.w3);
    get(s, "w4", cfg.weights.w4);
    get(s, "kappa_r", cfg.weights.kappa_r);
    get(s, "kappa_p", cfg.weights.kappa_p);
    get(s, "tau_R", cfg.weights.tau_R);
    get(s, "tau_v", cfg.weights.tau_v);
    get(s, "tau_p", cfg.weights.tau_p);
    get(s, "max_iterations", cfg.solver.max_iterations);
    get(s, "initial_lambda", cfg.solver.initial_lambda);
    get(s, "lambda_up", cfg.solver.lambda_up);
    get(s, "lambda_down", cfg.solver.lambda_down);
    get(s, "cost_tol", cfg.solver.cost_tol);
    get(s, "step_tol", cfg.solver.step_tol);
    get(s, "jacobian_step", cfg.solver.jacobian_step);
    get(s, "chunk_nodes", cfg.chunk_nodes);
  }
  if (root.contains("train")) {
    const auto& s = root.at("train");
    check_keys(s, "train.",
               {"epsilon", "learning_rate", "epochs", "gradient_mode",
                "fd_step", "hidden_width"});
    get(s, "epsilon", cfg.train.train.epsilon);
    get(s, "learning_rate", cfg.train.train.learning_rate);
    get(s, "epochs", cfg.train.train.epochs);
    if (s.contains("gradient_mode"))
      cfg.train.train.gradient_mode =
          parse_grad_mode(s.at("gradient_mode").get<std::string>());
    get(s, "fd_step", cfg.train.train.fd_step);
    get(s, "hidden_width", cfg.train.hidden_width);
  }
  if (root.contains("gmm")) {
    const auto& s = root.at("gmm");
    check_keys(s, "gmm.",
               {"candidates", "beta", "window_s", "variance_floor",
                "max_em_iterations", "loglik_tol", "restarts"});
    get(s, "candidates", cfg.gmm.candidates);
    get(s, "beta", cfg.gmm.beta);
    get(s, "window_s", cfg.gmm.window_s);
    get(s, "variance_floor", cfg.gmm.gmm.variance_floor);
    get(s, "max_em_iterations", cfg.gmm.gmm.max_iterations);
    get(s, "loglik_tol", cfg.gmm.gmm.loglik_tol);
    get(s, "restarts", cfg.gmm.gmm.restarts);
  }
  if (root.contains("eval")) {
    const auto& s = root.at("eval");
    check_keys(s, "eval.", {"rpe_interval_s", "assoc_tol_s"});
    get(s, "rpe_interval_s", cfg.eval.rpe_interval_s);
    get(s, "assoc_tol_s", cfg.eval.assoc_tol_s);
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return parse_config(text);
}

std::string dump_config(const PipelineConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["sim"] = {
      {"duration_s", cfg.sim.duration_s},
      {"scan_rate_hz", cfg.sim.scan_rate_hz},
      {"imu_rate_hz", cfg.sim.imu_rate_hz},
      {"trajectory", recipe_name(cfg.sim.trajectory)},
      {"gyro_bias",
       {cfg.sim.gyro_bias.x(), cfg.sim.gyro_bias.y(), cfg.sim.gyro_bias.z()}},
      {"accel_bias",
       {cfg.sim.accel_bias.x(), cfg.sim.accel_bias.y(),
        cfg.sim.accel_bias.z()}},
      {"gyro_noise_std", cfg.sim.gyro_noise_std},
      {"accel_noise_std", cfg.sim.accel_noise_std},
      {"landmark_count", cfg.sim.landmark_count},
      {"room_extent_m", cfg.sim.room_extent_m},
      {"sensing_range_m", cfg.sim.sensing_range_m},
      {"points_per_scan", cfg.sim.points_per_scan},
      {"gravity",
       {cfg.sim.gravity.x(), cfg.sim.gravity.y(), cfg.sim.gravity.z()}},
  };
  j["icp"] = {
      {"max_iterations", cfg.icp.max_iterations},
      {"correspondence_cutoff_m", cfg.icp.correspondence_cutoff},
      {"convergence_tol", cfg.icp.convergence_tol},
      {"overlap_tau_m", cfg.icp.overlap_tau},
  };
  j["pgo"] = {
      {"w1", cfg.weights.w1},
      {"w2", cfg.weights.w2},
      {"w3", cfg.weights.w3},
      {"w4", cfg.weights.w4},
      {"kappa_r", cfg.weights.kappa_r},
      {"kappa_p", cfg.weights.kappa_p},
      {"tau_R", cfg.weights.tau_R},
      {"tau_v", cfg.weights.tau_v},
      {"tau_p", cfg.weights.tau_p},
      {"max_iterations", cfg.solver.max_iterations},
      {"initial_lambda", cfg.solver.initial_lambda},
      {"lambda_up", cfg.solver.lambda_up},
      {"lambda_down", cfg.solver.lambda_down},
      {"cost_tol", cfg.solver.cost_tol},
      {"step_tol", cfg.solver.step_tol},
      {"jacobian_step", cfg.solver.jacobian_step},
      {"chunk_nodes", cfg.chunk_nodes},
  };
  j["train"] = {
      {"epsilon", cfg.train.train.epsilon},
      {"learning_rate", cfg.train.train.learning_rate},
      {"epochs", cfg.train.train.epochs},
      {"gradient_mode", cfg.train.train.gradient_mode == GradMode::Analytic
                            ? "analytic"
                            : "finite-difference"},
      {"fd_step", cfg.train.train.fd_step},
      {"hidden_width", cfg.train.hidden_width},
  };
  j["gmm"] = {
      {"candidates", cfg.gmm.candidates},
      {"beta", cfg.gmm.beta},
      {"window_s", cfg.gmm.window_s},
      {"variance_floor", cfg.gmm.gmm.variance_floor},
      {"max_em_iterations", cfg.gmm.gmm.max_iterations},
      {"restarts", cfg.gmm.gmm.restarts},
      {"loglik_tol", cfg.gmm.gmm.loglik_tol},
  };
  j["eval"] = {
      {"rpe_interval_s", cfg.eval.rpe_interval_s},
      {"assoc_tol_s", cfg.eval.assoc_tol_s},
  };
  return j.dump(2) + "\n";
}

}  // namespace sio
