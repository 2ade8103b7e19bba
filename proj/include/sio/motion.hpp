// Motion-descriptor extraction, Gaussian-mixture fitting with EM and BIC
// model selection, class-balanced reweighting and a 1-D Wasserstein
// distance for distribution comparison.

#ifndef SIO_MOTION_HPP
#define SIO_MOTION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "sio/features.hpp"
#include "sio/kvdoc.hpp"

namespace sio {

/// z-scoring constants of the window features over a dataset.
struct NormStats {
  FeatureVec mean = FeatureVec::Zero();
  FeatureVec stddev = FeatureVec::Ones();
};

/// Computes dataset mean/stddev; constant dimensions get unit scale so the
/// standardized coordinate is exactly zero.
NormStats compute_norm_stats(const std::vector<FeatureVec>& raw);

struct MotionDescriptor {
  FeatureVec z = FeatureVec::Zero();
};

/// Standardized motion descriptor of one window. The window duration must be
/// within 20% of window_s; windows of fewer than 4 samples are rejected.
MotionDescriptor extract_descriptor(const ImuSegment& window,
                                    const NormStats& stats,
                                    double window_s = 0.2);

/// Diagonal-covariance Gaussian mixture over motion descriptors.
struct GmmModel {
  int components = 0;
  VecX weight;                   // mixture weights, sum to 1
  std::vector<FeatureVec> mean;
  std::vector<FeatureVec> var;   // per-dimension variances (floored)

  void validate() const;
  KvDoc to_doc() const;
  static GmmModel from_doc(const KvDoc& doc);
};

struct GmmConfig {
  double variance_floor = 1e-4;
  int max_iterations = 300;
  double loglik_tol = 1e-8;        // absolute increase threshold
  double collapse_weight = 1e-8;   // component weight triggering a re-seed
  int restarts = 4;                // seeded EM restarts per candidate
};

struct BicRow {
  int components = 0;
  double loglik = 0.0;
  double bic = 0.0;
};

struct GmmFit {
  GmmModel model;                // minimum-BIC model over the candidates
  std::vector<BicRow> bic_table;
};

/// EM per candidate component count (distance-weighted seeding, hard-
/// assignment initialization, several restarts keeping the best
/// likelihood), then BIC selection: k ln N - 2 lnL with k = G (2F + 1) - 1
/// for diagonal covariances. Requires at least 10 * max(candidates)
/// descriptors. A collapsed component is re-seeded once, then reported as
/// an error.
GmmFit fit_gmm(const std::vector<MotionDescriptor>& descriptors,
               const std::vector<int>& candidates, std::uint64_t seed,
               const GmmConfig& cfg = {});

/// Posterior component-assignment probabilities, computed in the log domain.
VecX responsibilities(const GmmModel& model, const MotionDescriptor& z);

/// Mixture log-likelihood of one descriptor.
double gmm_log_density(const GmmModel& model, const MotionDescriptor& z);

/// Effective frequencies and class-balanced weights
/// w_g = (1 - beta) / (1 - beta^{N_g}), normalized to mean one.
struct BalanceWeights {
  double beta = 0.999;
  VecX effective;   // N_g, responsibility mass per component
  VecX raw;         // w_g
  VecX normalized;  // w_g / mean(w)
};

/// N_g is the responsibility sum over the descriptors. A component with
/// (numerically) no mass receives the maximum raw weight over the others
/// before normalization, instead of the formula's division blowup.
BalanceWeights balance_weights(const GmmModel& model,
                               const std::vector<MotionDescriptor>& descriptors,
                               double beta);

/// Responsibility-weighted mixture of the normalized component weights.
double sample_weight(const GmmModel& model, const BalanceWeights& weights,
                     const MotionDescriptor& z);

/// First Wasserstein distance of two empirical samples: quantile coupling
/// for equal sizes, CDF-difference integral otherwise.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

/// Two-column text report of the BIC table.
void save_bic_table(const std::vector<BicRow>& table, const std::string& path);

}  // namespace sio

#endif  // SIO_MOTION_HPP
