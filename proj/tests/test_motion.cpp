#include <doctest.h>

#include "sio/motion.hpp"
#include "test_support.hpp"

using namespace sio;
namespace st = sio::testing;

namespace {

MotionDescriptor at(const FeatureVec& z) {
  MotionDescriptor d;
  d.z = z;
  return d;
}

std::vector<MotionDescriptor> gaussian_cluster(std::mt19937_64& rng,
                                               const FeatureVec& center,
                                               double sigma, int n) {
  std::normal_distribution<double> gauss(0.0, sigma);
  std::vector<MotionDescriptor> out;
  for (int i = 0; i < n; ++i) {
    MotionDescriptor d;
    for (int j = 0; j < kWindowFeatureDim; ++j)
      d.z[j] = center[j] + gauss(rng);
    out.push_back(d);
  }
  return out;
}

ImuSegment window_of(double duration, int n, const Vec3& gyro,
                     const Vec3& accel) {
  ImuSegment seg;
  seg.t_start = 0.0;
  seg.t_end = duration;
  for (int k = 0; k < n; ++k)
    seg.samples.push_back(
        {duration * static_cast<double>(k) / n, gyro, accel});
  return seg;
}

}  // namespace

TEST_CASE("window features and descriptors") {
  SUBCASE("constant window has zero variation features") {
    const ImuSegment seg =
        window_of(0.2, 40, Vec3(0.1, -0.2, 0.3), Vec3(0.0, 9.8, 0.1));
    const FeatureVec f = window_features(seg);
    // Layout: [mean|w|, std(dw), mean|a|, std(da)].
    CHECK(f.segment<3>(3).norm() == 0.0);
    CHECK(f.segment<3>(9).norm() == 0.0);
    CHECK((f.segment<3>(0) - Vec3(0.1, 0.2, 0.3)).norm() < 1e-15);
  }
  SUBCASE("identical windows give identical descriptors") {
    std::mt19937_64 rng(179);
    const ImuSegment seg = st::smooth_segment(rng, 0.2, 200.0);
    NormStats stats;
    const MotionDescriptor a = extract_descriptor(seg, stats);
    const MotionDescriptor b = extract_descriptor(seg, stats);
    CHECK((a.z - b.z).norm() == 0.0);
  }
  SUBCASE("duration far from the window length rejected") {
    const ImuSegment seg = window_of(0.3, 40, Vec3::Zero(), Vec3::Zero());
    CHECK_THROWS_AS(extract_descriptor(seg, NormStats{}, 0.2),
                    std::invalid_argument);
  }
  SUBCASE("too few samples rejected") {
    const ImuSegment seg = window_of(0.2, 3, Vec3::Zero(), Vec3::Zero());
    CHECK_THROWS_AS(extract_descriptor(seg, NormStats{}, 0.2),
                    std::invalid_argument);
  }
  SUBCASE("dataset standardization yields zero mean, unit variance") {
    std::mt19937_64 rng(181);
    std::vector<FeatureVec> raw;
    for (int k = 0; k < 300; ++k)
      raw.push_back(window_features(st::smooth_segment(rng, 0.2, 200.0)));
    const NormStats stats = compute_norm_stats(raw);
    FeatureVec mean = FeatureVec::Zero(), var = FeatureVec::Zero();
    for (const auto& f : raw) {
      const FeatureVec z = (f - stats.mean).cwiseQuotient(stats.stddev);
      mean += z;
      var += z.cwiseProduct(z);
    }
    mean /= raw.size();
    var /= raw.size();
    CHECK(mean.cwiseAbs().maxCoeff() < 1e-10);
    CHECK((var - FeatureVec::Ones()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("fit_gmm with BIC model selection") {
  std::mt19937_64 rng(191);
  SUBCASE("single tight blob selects one component") {
    const auto data = gaussian_cluster(rng, FeatureVec::Zero(), 0.5, 200);
    const GmmFit fit = fit_gmm(data, {1, 2, 3}, 42);
    CHECK(fit.model.components == 1);
    REQUIRE(fit.bic_table.size() == 3);
    CHECK(fit.bic_table[0].bic < fit.bic_table[1].bic);
  }
  SUBCASE("two well-separated blobs select two components") {
    FeatureVec c1 = FeatureVec::Zero(), c2 = FeatureVec::Zero();
    c2[0] = 10.0;  // 10 sigma apart at sigma = 1
    auto data = gaussian_cluster(rng, c1, 1.0, 150);
    const auto more = gaussian_cluster(rng, c2, 1.0, 150);
    data.insert(data.end(), more.begin(), more.end());
    const GmmFit fit = fit_gmm(data, {1, 2, 3, 4}, 7);
    CHECK(fit.model.components == 2);
    // Means land on the blob centers (within 0.1 sigma).
    std::vector<double> xs = {fit.model.mean[0][0], fit.model.mean[1][0]};
    std::sort(xs.begin(), xs.end());
    CHECK(std::abs(xs[0] - 0.0) < 0.1);
    CHECK(std::abs(xs[1] - 10.0) < 0.1);
  }
  SUBCASE("deterministic given the seed") {
    const auto data = gaussian_cluster(rng, FeatureVec::Zero(), 1.0, 120);
    const GmmFit a = fit_gmm(data, {1, 2}, 99);
    const GmmFit b = fit_gmm(data, {1, 2}, 99);
    CHECK(a.model.components == b.model.components);
    CHECK((a.model.weight - b.model.weight).norm() == 0.0);
    for (int g = 0; g < a.model.components; ++g)
      CHECK((a.model.mean[g] - b.model.mean[g]).norm() == 0.0);
    CHECK(a.bic_table[0].bic == b.bic_table[0].bic);
  }
  SUBCASE("too few descriptors rejected") {
    const auto data = gaussian_cluster(rng, FeatureVec::Zero(), 1.0, 25);
    CHECK_THROWS_AS(fit_gmm(data, {1, 2, 3}, 1), std::invalid_argument);
  }
}

TEST_CASE("responsibilities") {
  std::mt19937_64 rng(193);
  SUBCASE("single component is certain") {
    GmmModel m;
    m.components = 1;
    m.weight = VecX::Ones(1);
    m.mean = {FeatureVec::Zero()};
    m.var = {FeatureVec::Ones()};
    const VecX g = responsibilities(m, at(FeatureVec::Random()));
    REQUIRE(g.size() == 1);
    CHECK(g[0] == doctest::Approx(1.0));
  }
  GmmModel m;
  m.components = 2;
  m.weight = VecX::Constant(2, 0.5);
  FeatureVec c2 = FeatureVec::Zero();
  c2[0] = 20.0;
  m.mean = {FeatureVec::Zero(), c2};
  m.var = {FeatureVec::Ones(), FeatureVec::Ones()};
  SUBCASE("dominance at a component mean") {
    const VecX g = responsibilities(m, at(FeatureVec::Zero()));
    CHECK(g[0] >= 1.0 - 1e-6);
  }
  SUBCASE("normalization and direct-density oracle") {
    for (int k = 0; k < 30; ++k) {
      FeatureVec z = 3.0 * FeatureVec::Random();
      z[0] += 10.0 * (k % 2);
      const VecX g = responsibilities(m, at(z));
      CHECK(std::abs(g.sum() - 1.0) < 1e-12);
      // Plain-domain density evaluation.
      VecX dens(2);
      for (int c = 0; c < 2; ++c) {
        double q = 0.0;
        for (int j = 0; j < kWindowFeatureDim; ++j) {
          const double d = z[j] - m.mean[c][j];
          q += d * d / m.var[c][j] +
               std::log(2.0 * M_PI * m.var[c][j]);
        }
        dens[c] = m.weight[c] * std::exp(-0.5 * q);
      }
      if (dens.sum() > 0.0) {
        const VecX want = dens / dens.sum();
        CHECK((g - want).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }
  SUBCASE("log-domain evaluation survives extreme points") {
    FeatureVec far = FeatureVec::Constant(300.0);
    const VecX g = responsibilities(m, at(far));
    CHECK(std::abs(g.sum() - 1.0) < 1e-12);
    CHECK(g.allFinite());
  }
}

TEST_CASE("balance_weights") {
  GmmModel m;
  m.components = 2;
  m.weight = VecX::Constant(2, 0.5);
  FeatureVec c2 = FeatureVec::Zero();
  c2[0] = 30.0;
  m.mean = {FeatureVec::Zero(), c2};
  m.var = {FeatureVec::Ones(), FeatureVec::Ones()};

  SUBCASE("hand-checked values for beta 0.9, counts (1, 2)") {
    // One descriptor at each mean, one extra at the second.
    std::vector<MotionDescriptor> data = {at(FeatureVec::Zero()), at(c2),
                                          at(c2)};
    const BalanceWeights w = balance_weights(m, data, 0.9);
    CHECK(w.effective[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(w.effective[1] == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(w.raw[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(w.raw[1] == doctest::Approx(0.1 / 0.19).epsilon(1e-6));
    CHECK(w.normalized[0] == doctest::Approx(1.3103).epsilon(1e-4));
    CHECK(w.normalized[1] == doctest::Approx(0.6897).epsilon(1e-4));
    CHECK(std::abs(w.normalized.mean() - 1.0) < 1e-12);
  }
  SUBCASE("equal masses give unit weights") {
    std::vector<MotionDescriptor> data = {at(FeatureVec::Zero()), at(c2)};
    const BalanceWeights w = balance_weights(m, data, 0.99);
    CHECK(w.normalized[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.normalized[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("large-count limit approaches 1 - beta") {
    // Direct formula probe at N = 1e6, beta = 0.999.
    const double beta = 0.999;
    const double w_raw = (1.0 - beta) / (1.0 - std::pow(beta, 1e6));
    CHECK(std::abs(w_raw - (1.0 - beta)) < 1e-6);
  }
  SUBCASE("strictly decreasing in the effective count") {
    std::mt19937_64 rng(197);
    std::uniform_real_distribution<double> u(0.5, 5000.0);
    const double beta = 0.999;
    for (int k = 0; k < 100; ++k) {
      double n1 = u(rng), n2 = u(rng);
      if (n1 == n2) continue;
      if (n1 > n2) std::swap(n1, n2);
      const double w1 = (1.0 - beta) / (1.0 - std::pow(beta, n1));
      const double w2 = (1.0 - beta) / (1.0 - std::pow(beta, n2));
      CHECK(w1 > w2);
    }
  }
  SUBCASE("component without mass falls back to the maximum weight") {
    // All descriptors at the first mean; the second component gets
    // essentially zero responsibility mass.
    std::vector<MotionDescriptor> data(5, at(FeatureVec::Zero()));
    const BalanceWeights w = balance_weights(m, data, 0.9);
    CHECK(w.raw[1] >= w.raw[0]);
    CHECK(std::abs(w.normalized.mean() - 1.0) < 1e-12);
  }
  SUBCASE("beta outside (0,1) rejected") {
    std::vector<MotionDescriptor> data = {at(FeatureVec::Zero()), at(c2)};
    CHECK_THROWS_AS(balance_weights(m, data, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(balance_weights(m, data, 1.0), std::invalid_argument);
  }
}

TEST_CASE("sample_weight") {
  GmmModel m;
  m.components = 3;
  m.weight = VecX::Constant(3, 1.0 / 3.0);
  FeatureVec c1 = FeatureVec::Zero(), c2 = FeatureVec::Zero(),
             c3 = FeatureVec::Zero();
  c2[0] = 15.0;
  c3[1] = 15.0;
  m.mean = {c1, c2, c3};
  m.var = {FeatureVec::Ones(), FeatureVec::Ones(), FeatureVec::Ones()};

  BalanceWeights w;
  w.beta = 0.999;
  w.effective = VecX::Ones(3);
  w.raw = VecX::Ones(3);
  w.normalized = VecX::Ones(3);

  SUBCASE("unit component weights give one everywhere") {
    std::mt19937_64 rng(199);
    for (int k = 0; k < 20; ++k) {
      const double v = sample_weight(m, w, at(3.0 * FeatureVec::Random()));
      CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("one-hot responsibility returns that component weight") {
    w.normalized = VecX::Zero(3);
    w.normalized << 1.8, 0.9, 0.3;
    CHECK(sample_weight(m, w, at(c2)) == doctest::Approx(0.9).epsilon(1e-6));
  }
  SUBCASE("matches the dot-product oracle and stays within bounds") {
    std::mt19937_64 rng(211);
    w.normalized << 1.8, 0.9, 0.3;
    for (int k = 0; k < 30; ++k) {
      FeatureVec z = 5.0 * FeatureVec::Random();
      const VecX gamma = responsibilities(m, at(z));
      const double want = gamma.dot(w.normalized);
      const double got = sample_weight(m, w, at(z));
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
      CHECK(got >= w.normalized.minCoeff() - 1e-12);
      CHECK(got <= w.normalized.maxCoeff() + 1e-12);
    }
  }
}

TEST_CASE("motion-balance effect on contribution ratios") {
  // Populations (1000, 100, 10) in well-separated clusters: weighting must
  // compress the max/min per-component contribution ratio by >= 5x.
  std::mt19937_64 rng(223);
  FeatureVec c1 = FeatureVec::Zero(), c2 = FeatureVec::Zero(),
             c3 = FeatureVec::Zero();
  c2[0] = 12.0;
  c3[1] = 12.0;
  auto data = gaussian_cluster(rng, c1, 1.0, 1000);
  auto b = gaussian_cluster(rng, c2, 1.0, 100);
  auto c = gaussian_cluster(rng, c3, 1.0, 10);
  data.insert(data.end(), b.begin(), b.end());
  data.insert(data.end(), c.begin(), c.end());

  const GmmFit fit = fit_gmm(data, {3}, 17);
  const BalanceWeights w = balance_weights(fit.model, data, 0.999);

  VecX weighted = VecX::Zero(3), unit = VecX::Zero(3);
  for (const auto& z : data) {
    const VecX gamma = responsibilities(fit.model, z);
    const double wn = sample_weight(fit.model, w, z);
    weighted += wn * gamma;
    unit += gamma;
  }
  const double ratio_unit = unit.maxCoeff() / unit.minCoeff();
  const double ratio_weighted = weighted.maxCoeff() / weighted.minCoeff();
  CHECK(ratio_unit >= 5.0 * ratio_weighted);
}

TEST_CASE("wasserstein_1d") {
  SUBCASE("identical samples") {
    std::vector<double> a = {0.5, 1.0, -2.0, 3.0};
    CHECK(wasserstein_1d(a, a) == 0.0);
  }
  SUBCASE("point masses at 0 and 1") {
    CHECK(wasserstein_1d({0.0}, {1.0}) == doctest::Approx(1.0));
  }
  SUBCASE("shifted uniform samples") {
    std::mt19937_64 rng(227);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double shift = 0.35;
    const int n = 4000;
    std::vector<double> a, b;
    for (int i = 0; i < n; ++i) {
      a.push_back(u(rng));
      b.push_back(u(rng) + shift);
    }
    CHECK(std::abs(wasserstein_1d(a, b) - shift) < 3.0 / std::sqrt(n));
  }
  SUBCASE("unequal sizes use the cdf integral") {
    // W1 between U{0,1} (2 atoms) and U{0,0.5,1} (3 atoms) is 1/6:
    // |F_a - F_b| is 1/6 on [0,0.5) and 1/6 on [0.5,1).
    const double got = wasserstein_1d({0.0, 1.0}, {0.0, 0.5, 1.0});
    CHECK(got == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  }
  SUBCASE("empty input rejected") {
    CHECK_THROWS_AS(wasserstein_1d({}, {1.0}), std::invalid_argument);
  }
}

TEST_CASE("gmm model document round trip") {
  std::mt19937_64 rng(229);
  const auto data = gaussian_cluster(rng, FeatureVec::Zero(), 1.0, 100);
  const GmmFit fit = fit_gmm(data, {2}, 3);
  const std::string once = fit.model.to_doc().serialize();
  const GmmModel back = GmmModel::from_doc(KvDoc::parse(once));
  CHECK(back.to_doc().serialize() == once);
  CHECK(back.components == fit.model.components);
}
