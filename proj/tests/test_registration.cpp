#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sio/registration.hpp"
#include "test_support.hpp"

using namespace sio;
namespace st = sio::testing;
namespace fs = std::filesystem;

namespace {

PointCloud random_cloud(std::mt19937_64& rng, std::size_t n,
                        double extent = 10.0) {
  PointCloud cloud;
  std::uniform_real_distribution<double> u(-extent / 2.0, extent / 2.0);
  for (std::size_t i = 0; i < n; ++i)
    cloud.points.emplace_back(u(rng), u(rng), u(rng));
  return cloud;
}

std::pair<int, double> brute_nearest(const std::vector<Vec3>& pts,
                                     const Vec3& q, int exclude = -1) {
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (static_cast<int>(i) == exclude) continue;
    const double d2 = (pts[i] - q).squaredNorm();
    if (d2 < best_d2 || (d2 == best_d2 && static_cast<int>(i) < best)) {
      best_d2 = d2;
      best = static_cast<int>(i);
    }
  }
  return {best, best_d2};
}

}  // namespace

TEST_CASE("kd-tree equals brute force exactly, including ties") {
  std::mt19937_64 rng(83);
  SUBCASE("random clouds") {
    for (int trial = 0; trial < 5; ++trial) {
      const PointCloud cloud = random_cloud(rng, 500);
      const KdTree tree(cloud.points);
      for (int q = 0; q < 200; ++q) {
        const Vec3 query = st::random_vec3(rng, 6.0);
        const auto [bi, bd] = brute_nearest(cloud.points, query);
        const auto [ti, td] = tree.nearest(query);
        CHECK(ti == bi);
        CHECK(td == bd);
      }
    }
  }
  SUBCASE("grid cloud with exact distance ties") {
    PointCloud cloud;
    for (int x = 0; x < 5; ++x)
      for (int y = 0; y < 5; ++y)
        for (int z = 0; z < 5; ++z) cloud.points.emplace_back(x, y, z);
    const KdTree tree(cloud.points);
    // Query points equidistant to several grid nodes.
    for (double off : {0.5, 1.5, 2.5}) {
      const Vec3 q(off, off, off);
      const auto [bi, bd] = brute_nearest(cloud.points, q);
      const auto [ti, td] = tree.nearest(q);
      CHECK(ti == bi);
      CHECK(td == bd);
    }
  }
  SUBCASE("exclusion used by self-spacing queries") {
    const PointCloud cloud = random_cloud(rng, 300);
    const KdTree tree(cloud.points);
    for (int i = 0; i < 50; ++i) {
      const auto [bi, bd] = brute_nearest(cloud.points, cloud.points[i], i);
      const auto [ti, td] = tree.nearest(cloud.points[i], i);
      CHECK(ti == bi);
      CHECK(td == bd);
    }
  }
}

TEST_CASE("icp_align") {
  std::mt19937_64 rng(89);
  IcpConfig cfg;
  cfg.max_iterations = 60;
  cfg.correspondence_cutoff = 2.0;
  cfg.convergence_tol = 1e-9;

  SUBCASE("identical clouds, identity init") {
    const PointCloud cloud = random_cloud(rng, 200);
    const IcpResult res = icp_align(cloud, cloud, Pose{}, cfg);
    CHECK(res.converged);
    CHECK(res.rms <= 1e-9);
    CHECK((res.transform.R - Mat3::Identity()).norm() < 1e-9);
    CHECK(res.transform.p.norm() < 1e-9);
  }
  SUBCASE("recovers a rigid motion of a dense asymmetric cloud") {
    const PointCloud source = random_cloud(rng, 2000);
    const Pose truth{exp_so3(Vec3(0.02, -0.03, 5.0 * M_PI / 180.0)),
                     Vec3(0.1, 0.0, 0.05)};
    const PointCloud target = transform_cloud(truth, source);
    const IcpResult res = icp_align(source, target, Pose{}, cfg);
    CHECK(res.converged);
    CHECK(rotation_distance(res.transform.R, truth.R) < 1e-3);
    CHECK((res.transform.p - truth.p).norm() < 1e-3);
  }
  SUBCASE("disjoint clouds do not converge") {
    const PointCloud a = random_cloud(rng, 50);
    PointCloud b = a;
    for (auto& p : b.points) p += Vec3(100.0, 0.0, 0.0);
    const IcpResult res = icp_align(a, b, Pose{}, cfg);
    CHECK_FALSE(res.converged);
    CHECK(!res.diagnostic.empty());
  }
  SUBCASE("tiny clouds rejected") {
    const PointCloud tiny = random_cloud(rng, 5);
    CHECK_THROWS_AS(icp_align(tiny, tiny, Pose{}, cfg), std::invalid_argument);
  }
}

TEST_CASE("icp convergence basin on dense clouds") {
  std::mt19937_64 rng(97);
  IcpConfig cfg;
  cfg.max_iterations = 80;
  cfg.correspondence_cutoff = 3.0;
  cfg.convergence_tol = 1e-9;
  for (int trial = 0; trial < 5; ++trial) {
    const PointCloud source = random_cloud(rng, 1500, 10.0);
    std::uniform_real_distribution<double> ua(-10.0 * M_PI / 180.0,
                                              10.0 * M_PI / 180.0);
    Vec3 axis = st::random_vec3(rng);
    axis.normalize();
    const Pose truth{exp_so3(ua(rng) * axis), st::random_vec3(rng, 1.5)};
    const PointCloud target = transform_cloud(truth, source);
    const IcpResult res = icp_align(source, target, Pose{}, cfg);
    CHECK(res.converged);
    CHECK(rotation_distance(res.transform.R, truth.R) < 1e-3);
    CHECK((res.transform.p - truth.p).norm() < 1e-3);
  }
}

TEST_CASE("overlap_ratio") {
  std::mt19937_64 rng(101);
  const PointCloud cloud = random_cloud(rng, 400);
  SUBCASE("identical clouds give 1") {
    CHECK(overlap_ratio(cloud, cloud, 0.1) == 1.0);
  }
  SUBCASE("far translation gives 0") {
    PointCloud moved = cloud;
    for (auto& p : moved.points) p += Vec3(50.0, 0.0, 0.0);
    CHECK(overlap_ratio(cloud, moved, 0.5) == 0.0);
  }
  SUBCASE("constructed half overlap") {
    // First half of P coincides with Q, second half far away.
    PointCloud p, q;
    for (int i = 0; i < 100; ++i) {
      const Vec3 v = st::random_vec3(rng, 5.0);
      q.points.push_back(v);
      p.points.push_back(i < 50 ? v : v + Vec3(100.0, 0.0, 0.0));
    }
    const double got = overlap_ratio(p, q, 0.25);
    CHECK(std::abs(got - 0.5) <= 1.0 / 100.0);
    // Brute-force fraction oracle.
    int inside = 0;
    for (const auto& x : p.points)
      if (brute_nearest(q.points, x).second <= 0.25 * 0.25) ++inside;
    CHECK(got == doctest::Approx(inside / 100.0));
  }
  SUBCASE("monotone nonincreasing as tau decreases") {
    PointCloud moved = cloud;
    std::normal_distribution<double> jitter(0.0, 0.2);
    for (auto& p : moved.points)
      p += Vec3(jitter(rng), jitter(rng), jitter(rng));
    double prev = 1.0;
    for (double tau : {1.0, 0.5, 0.25, 0.12, 0.06}) {
      const double r = overlap_ratio(cloud, moved, tau);
      CHECK(r <= prev);
      prev = r;
    }
  }
}

TEST_CASE("symmetric_overlap") {
  std::mt19937_64 rng(103);
  const PointCloud cloud = random_cloud(rng, 500);
  SUBCASE("same cloud under identity is 1") {
    CHECK(symmetric_overlap(Pose{}, cloud, cloud, 0.1) ==
          doctest::Approx(1.0));
  }
  SUBCASE("equals the mean of the two directed overlaps") {
    const PointCloud other = random_cloud(rng, 450);
    const Pose dT = st::random_pose(rng, 0.5);
    const double tau = 0.8;
    const double got = symmetric_overlap(dT, cloud, other, tau);
    const double fwd = overlap_ratio(cloud, transform_cloud(dT, other), tau);
    const double bwd =
        overlap_ratio(other, transform_cloud(inverse_se3(dT), cloud), tau);
    CHECK(got == doctest::Approx(0.5 * (fwd + bwd)).epsilon(1e-12));
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
  SUBCASE("true motion scores higher than identity on a moved scene") {
    const Pose truth{exp_so3(Vec3(0.0, 0.0, 0.05)), Vec3(0.4, -0.2, 0.1)};
    // Scene seen from two poses: second cloud is the scene in the moved frame.
    const PointCloud scene = random_cloud(rng, 800, 8.0);
    const PointCloud moved = transform_cloud(inverse_se3(truth), scene);
    const double tau = 0.3;
    CHECK(symmetric_overlap(truth, scene, moved, tau) >
          symmetric_overlap(Pose{}, scene, moved, tau));
  }
}

TEST_CASE("median spacing and the default overlap threshold") {
  PointCloud grid;
  for (int x = 0; x < 6; ++x)
    for (int y = 0; y < 6; ++y)
      for (int z = 0; z < 2; ++z)
        grid.points.emplace_back(0.5 * x, 0.5 * y, 0.5 * z);
  CHECK(median_point_spacing(grid) == doctest::Approx(0.5));
  CHECK(default_overlap_tau(grid) == doctest::Approx(1.0));
}

TEST_CASE("cloud file io") {
  const fs::path dir = fs::temp_directory_path() / "sio_cloud_io_test";
  fs::create_directories(dir);
  std::mt19937_64 rng(107);
  const PointCloud cloud = random_cloud(rng, 64);

  SUBCASE("xyz round trip") {
    const std::string path = (dir / "cloud.xyz").string();
    write_cloud_xyz(cloud, path);
    const PointCloud back = read_cloud(path);
    REQUIRE(back.size() == cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
      CHECK((back.points[i] - cloud.points[i]).norm() == 0.0);
  }
  SUBCASE("malformed xyz line reports the line number") {
    const std::string path = (dir / "bad.xyz").string();
    std::ofstream os(path);
    os << "0 0 0\n1 1 1\nnot numbers here\n";
    os.close();
    try {
      read_cloud_xyz(path);
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
  }
  SUBCASE("ascii ply with extra properties") {
    const std::string path = (dir / "cloud.ply").string();
    std::ofstream os(path);
    os << "ply\nformat ascii 1.0\nelement vertex 3\n"
          "property float x\nproperty float y\nproperty float z\n"
          "property float intensity\nend_header\n"
          "1 2 3 0.5\n4 5 6 0.25\n7 8 9 0.125\n";
    os.close();
    const PointCloud back = read_cloud(path);
    REQUIRE(back.size() == 3);
    CHECK((back.points[1] - Vec3(4.0, 5.0, 6.0)).norm() == 0.0);
  }
  SUBCASE("ply missing coordinates rejected") {
    const std::string path = (dir / "bad.ply").string();
    std::ofstream os(path);
    os << "ply\nformat ascii 1.0\nelement vertex 1\n"
          "property float x\nproperty float y\nend_header\n1 2\n";
    os.close();
    CHECK_THROWS_AS(read_cloud_ply(path), std::runtime_error);
  }
  fs::remove_all(dir);
}
