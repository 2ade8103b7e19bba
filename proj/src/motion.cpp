#include "sio/motion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "sio/util.hpp"

namespace sio {

NormStats compute_norm_stats(const std::vector<FeatureVec>& raw) {
  if (raw.empty())
    throw std::invalid_argument("compute_norm_stats: empty dataset");
  NormStats stats;
  stats.mean.setZero();
  for (const auto& f : raw) stats.mean += f;
  stats.mean /= static_cast<double>(raw.size());
  FeatureVec var = FeatureVec::Zero();
  for (const auto& f : raw) {
    const FeatureVec d = f - stats.mean;
    var += d.cwiseProduct(d);
  }
  var /= static_cast<double>(raw.size());
  for (int i = 0; i < kWindowFeatureDim; ++i)
    stats.stddev[i] = var[i] > 1e-24 ? std::sqrt(var[i]) : 1.0;
  return stats;
}

MotionDescriptor extract_descriptor(const ImuSegment& window,
                                    const NormStats& stats, double window_s) {
  const double dur = window.duration();
  if (std::abs(dur - window_s) > 0.2 * window_s)
    throw std::invalid_argument(
        "extract_descriptor: window duration " + fmt_double(dur) +
        " deviates more than 20% from " + fmt_double(window_s));
  MotionDescriptor d;
  d.z = (window_features(window) - stats.mean).cwiseQuotient(stats.stddev);
  if (!d.z.allFinite())
    throw std::invalid_argument("extract_descriptor: non-finite descriptor");
  return d;
}

void GmmModel::validate() const {
  if (components < 1 || weight.size() != components ||
      static_cast<int>(mean.size()) != components ||
      static_cast<int>(var.size()) != components)
    throw std::invalid_argument("GmmModel: inconsistent component count");
  if (std::abs(weight.sum() - 1.0) > 1e-12 || (weight.array() <= 0.0).any())
    throw std::invalid_argument("GmmModel: mixture weights must be positive and sum to 1");
  for (const auto& v : var)
    if ((v.array() <= 0.0).any())
      throw std::invalid_argument("GmmModel: variances must be positive");
}

KvDoc GmmModel::to_doc() const {
  validate();
  KvDoc doc("gmm-model", 1);
  doc.set_int("components", components);
  doc.set_int("feature_dim", kWindowFeatureDim);
  doc.set_vector("weight", weight);
  for (int g = 0; g < components; ++g) {
    doc.set_vector("mean_" + std::to_string(g), mean[g]);
    doc.set_vector("var_" + std::to_string(g), var[g]);
  }
  return doc;
}

GmmModel GmmModel::from_doc(const KvDoc& doc) {
  if (doc.doc_type() != "gmm-model")
    throw std::runtime_error("GmmModel: unexpected document type '" +
                             doc.doc_type() + "'");
  if (doc.get_int("feature_dim") != kWindowFeatureDim)
    throw std::runtime_error("GmmModel: incompatible feature dimension");
  GmmModel m;
  m.components = static_cast<int>(doc.get_int("components"));
  m.weight = doc.get_vector("weight");
  for (int g = 0; g < m.components; ++g) {
    m.mean.push_back(doc.get_vector("mean_" + std::to_string(g)));
    m.var.push_back(doc.get_vector("var_" + std::to_string(g)));
  }
  m.validate();
  return m;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double log_component_density(const GmmModel& m, int g, const FeatureVec& z) {
  double acc = 0.0;
  for (int d = 0; d < kWindowFeatureDim; ++d) {
    const double diff = z[d] - m.mean[g][d];
    acc += diff * diff / m.var[g][d] + std::log(m.var[g][d]) + kLog2Pi;
  }
  return -0.5 * acc;
}

/// log pi_g + log N_g for all components.
VecX weighted_log_densities(const GmmModel& m, const FeatureVec& z) {
  VecX out(m.components);
  for (int g = 0; g < m.components; ++g)
    out[g] = std::log(m.weight[g]) + log_component_density(m, g, z);
  return out;
}

double log_sum_exp(const VecX& v) {
  const double peak = v.maxCoeff();
  if (!std::isfinite(peak)) return peak;
  return peak + std::log((v.array() - peak).exp().sum());
}

double total_loglik(const GmmModel& m, const std::vector<MotionDescriptor>& zs) {
  double acc = 0.0;
  for (const auto& z : zs) acc += log_sum_exp(weighted_log_densities(m, z.z));
  return acc;
}

FeatureVec dataset_variance(const std::vector<MotionDescriptor>& zs,
                            double floor_value) {
  FeatureVec mean = FeatureVec::Zero();
  for (const auto& z : zs) mean += z.z;
  mean /= static_cast<double>(zs.size());
  FeatureVec var = FeatureVec::Zero();
  for (const auto& z : zs) {
    const FeatureVec d = z.z - mean;
    var += d.cwiseProduct(d);
  }
  var /= static_cast<double>(zs.size());
  return var.cwiseMax(floor_value);
}

/// Distance-weighted center seeding: the first center is a uniform draw,
/// each further center is drawn proportionally to the squared distance to
/// the nearest already-chosen center.
std::vector<int> seed_centers(const std::vector<MotionDescriptor>& zs, int G,
                              std::mt19937_64& rng) {
  const std::size_t n = zs.size();
  std::vector<int> centers;
  std::uniform_int_distribution<std::size_t> uni(0, n - 1);
  centers.push_back(static_cast<int>(uni(rng)));
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < G) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c : centers)
        best = std::min(best, (zs[i].z - zs[c].z).squaredNorm());
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      centers.push_back(static_cast<int>(uni(rng)));
      continue;
    }
    std::uniform_real_distribution<double> pick(0.0, total);
    double target = pick(rng);
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= d2[i];
      if (target <= 0.0) {
        chosen = i;
        break;
      }
    }
    centers.push_back(static_cast<int>(chosen));
  }
  return centers;
}

struct EmResult {
  GmmModel model;
  double loglik = 0.0;
};

EmResult run_em(const std::vector<MotionDescriptor>& zs, int G,
                std::mt19937_64& rng, const GmmConfig& cfg) {
  const std::size_t n = zs.size();
  const FeatureVec base_var = dataset_variance(zs, cfg.variance_floor);

  // Seed centers by distance-weighted sampling, then initialize each
  // component from the hard assignment of points to their nearest center.
  const auto centers = seed_centers(zs, G, rng);
  std::vector<int> assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int g = 0; g < G; ++g) {
      const double d2 = (zs[i].z - zs[centers[g]].z).squaredNorm();
      if (d2 < best) {
        best = d2;
        assign[i] = g;
      }
    }
  }
  GmmModel m;
  m.components = G;
  m.weight = VecX::Zero(G);
  m.mean.assign(G, FeatureVec::Zero());
  m.var.assign(G, base_var);
  std::vector<double> count(G, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    count[assign[i]] += 1.0;
    m.mean[assign[i]] += zs[i].z;
  }
  for (int g = 0; g < G; ++g) {
    if (count[g] > 0.0)
      m.mean[g] /= count[g];
    else
      m.mean[g] = zs[centers[g]].z;
    m.weight[g] = std::max(count[g], 1.0) / static_cast<double>(n);
  }
  m.weight /= m.weight.sum();
  std::vector<FeatureVec> cluster_var(G, FeatureVec::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    const FeatureVec d = zs[i].z - m.mean[assign[i]];
    cluster_var[assign[i]] += d.cwiseProduct(d);
  }
  for (int g = 0; g < G; ++g) {
    if (count[g] > 3.0)
      m.var[g] = (cluster_var[g] / count[g]).cwiseMax(cfg.variance_floor);
  }

  MatX gamma(n, G);
  double prev_loglik = -std::numeric_limits<double>::infinity();
  bool reseeded = false;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    // E-step in the log domain.
    double loglik = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const VecX logd = weighted_log_densities(m, zs[i].z);
      const double lse = log_sum_exp(logd);
      loglik += lse;
      for (int g = 0; g < G; ++g) gamma(i, g) = std::exp(logd[g] - lse);
    }
    if (!std::isfinite(loglik))
      throw std::runtime_error("fit_gmm: non-finite log-likelihood");
    if (loglik + 1e-9 * std::max(1.0, std::abs(loglik)) < prev_loglik)
      throw std::runtime_error("fit_gmm: log-likelihood decreased");
    if (loglik - prev_loglik < cfg.loglik_tol && iter > 0) {
      return {m, loglik};
    }
    prev_loglik = loglik;

    // M-step with the variance floor (coordinate-wise constrained maximum).
    bool collapsed = false;
    for (int g = 0; g < G; ++g) {
      const double mass = gamma.col(g).sum();
      if (mass / static_cast<double>(n) < cfg.collapse_weight) {
        collapsed = true;
        if (reseeded)
          throw std::runtime_error(
              "fit_gmm: component collapsed again after re-seeding");
        // Move the dead component to the point the model explains worst.
        std::size_t worst = 0;
        double worst_logd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
          const double ld = log_sum_exp(weighted_log_densities(m, zs[i].z));
          if (ld < worst_logd) {
            worst_logd = ld;
            worst = i;
          }
        }
        m.mean[g] = zs[worst].z;
        m.var[g] = base_var;
        m.weight[g] = 1.0 / static_cast<double>(n);
        m.weight /= m.weight.sum();
        reseeded = true;
        prev_loglik = -std::numeric_limits<double>::infinity();
        break;
      }
      FeatureVec mu = FeatureVec::Zero();
      for (std::size_t i = 0; i < n; ++i) mu += gamma(i, g) * zs[i].z;
      mu /= mass;
      FeatureVec var = FeatureVec::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        const FeatureVec d = zs[i].z - mu;
        var += gamma(i, g) * d.cwiseProduct(d);
      }
      var /= mass;
      m.mean[g] = mu;
      m.var[g] = var.cwiseMax(cfg.variance_floor);
      m.weight[g] = mass / static_cast<double>(n);
    }
    if (!collapsed) m.weight /= m.weight.sum();
  }
  return {m, total_loglik(m, zs)};
}

}  // namespace

GmmFit fit_gmm(const std::vector<MotionDescriptor>& descriptors,
               const std::vector<int>& candidates, std::uint64_t seed,
               const GmmConfig& cfg) {
  if (candidates.empty())
    throw std::invalid_argument("fit_gmm: no candidate component counts");
  const int max_g = *std::max_element(candidates.begin(), candidates.end());
  if (max_g < 1) throw std::invalid_argument("fit_gmm: candidates must be >= 1");
  if (descriptors.size() < 10 * static_cast<std::size_t>(max_g))
    throw std::invalid_argument(
        "fit_gmm: needs at least 10 * max(candidates) descriptors, got " +
        std::to_string(descriptors.size()));

  GmmFit fit;
  double best_bic = std::numeric_limits<double>::infinity();
  const double log_n = std::log(static_cast<double>(descriptors.size()));
  for (int g : candidates) {
    // Several seeded restarts per candidate; the best likelihood wins.
    EmResult em;
    em.loglik = -std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < cfg.restarts; ++restart) {
      std::mt19937_64 rng(seed + 1315423911ULL * static_cast<std::uint64_t>(
                                                     g * cfg.restarts + restart));
      const EmResult candidate = run_em(descriptors, g, rng, cfg);
      if (candidate.loglik > em.loglik) em = candidate;
    }
    const double k = g * (2.0 * kWindowFeatureDim + 1.0) - 1.0;
    const double bic = k * log_n - 2.0 * em.loglik;
    fit.bic_table.push_back({g, em.loglik, bic});
    if (bic < best_bic) {
      best_bic = bic;
      fit.model = em.model;
    }
  }
  fit.model.validate();
  return fit;
}

VecX responsibilities(const GmmModel& model, const MotionDescriptor& z) {
  model.validate();
  const VecX logd = weighted_log_densities(model, z.z);
  const double lse = log_sum_exp(logd);
  return (logd.array() - lse).exp();
}

double gmm_log_density(const GmmModel& model, const MotionDescriptor& z) {
  return log_sum_exp(weighted_log_densities(model, z.z));
}

BalanceWeights balance_weights(const GmmModel& model,
                               const std::vector<MotionDescriptor>& descriptors,
                               double beta) {
  if (!(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("balance_weights: beta must lie in (0, 1)");
  model.validate();
  const int G = model.components;
  BalanceWeights out;
  out.beta = beta;
  out.effective = VecX::Zero(G);
  for (const auto& z : descriptors)
    out.effective += responsibilities(model, z);

  out.raw = VecX::Zero(G);
  double max_raw = 0.0;
  bool any = false;
  for (int g = 0; g < G; ++g) {
    // 1 - beta^N via expm1 keeps small masses from underflowing; masses
    // this close to zero take the fallback below instead of blowing up.
    const double denom = -std::expm1(out.effective[g] * std::log(beta));
    if (out.effective[g] > 1e-12 && denom > 0.0) {
      out.raw[g] = (1.0 - beta) / denom;
      max_raw = std::max(max_raw, out.raw[g]);
      any = true;
    } else {
      out.raw[g] = -1.0;  // marks the fallback
    }
  }
  if (!any)
    throw std::invalid_argument("balance_weights: no component carries mass");
  for (int g = 0; g < G; ++g)
    if (out.raw[g] < 0.0) out.raw[g] = max_raw;
  out.normalized = out.raw / out.raw.mean();
  return out;
}

double sample_weight(const GmmModel& model, const BalanceWeights& weights,
                     const MotionDescriptor& z) {
  return responsibilities(model, z).dot(weights.normalized);
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("wasserstein_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
  }
  // Integral of |F_a - F_b| over the merged support.
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t ia = 0, ib = 0;
  double acc = 0.0;
  double x = std::min(a.front(), b.front());
  while (ia < a.size() || ib < b.size()) {
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    double next = std::numeric_limits<double>::infinity();
    if (ia < a.size()) next = std::min(next, a[ia]);
    if (ib < b.size()) next = std::min(next, b[ib]);
    if (!std::isfinite(next)) break;
    acc += std::abs(ia / na - ib / nb) * (next - x);
    x = next;
  }
  return acc;
}

void save_bic_table(const std::vector<BicRow>& table,
                    const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write BIC table '" + path + "'");
  os << "# components bic\n";
  for (const auto& row : table)
    os << row.components << ' ' << fmt_double(row.bic) << '\n';
}

}  // namespace sio
