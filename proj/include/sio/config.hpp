// Pipeline configuration: strict JSON with schema validation. Unknown keys
// are rejected anywhere in the document; every field has a default.

#ifndef SIO_CONFIG_HPP
#define SIO_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "sio/correction.hpp"
#include "sio/motion.hpp"
#include "sio/pgo.hpp"
#include "sio/registration.hpp"
#include "sio/sim.hpp"

namespace sio {

struct TrainStageConfig {
  TrainConfig train;      // epsilon, learning rate, epochs, gradient mode, fd step
  int hidden_width = 4;   // WindowModel capacity
};

struct GmmStageConfig {
  std::vector<int> candidates = {1, 2, 3, 4, 5, 6};
  double beta = 0.999;
  double window_s = 0.2;  // descriptor window duration
  GmmConfig gmm;
};

struct EvalConfig {
  double rpe_interval_s = 0.2;
  double assoc_tol_s = 1e-3;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  SimConfig sim;
  IcpConfig icp;
  InfoWeights weights;
  SolverConfig solver;
  int chunk_nodes = 20;  // pose-graph window length
  TrainStageConfig train;
  GmmStageConfig gmm;
  EvalConfig eval;

  void validate() const;
};

/// Parses a JSON config file. Missing fields keep their defaults; unknown
/// keys fail with the offending path.
PipelineConfig load_config(const std::string& path);

/// Parses from a JSON string (exposed for tests).
PipelineConfig parse_config(const std::string& text);

/// Canonical JSON form of the current configuration.
std::string dump_config(const PipelineConfig& cfg);

}  // namespace sio

#endif  // SIO_CONFIG_HPP
