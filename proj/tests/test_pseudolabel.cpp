#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sio/pseudolabel.hpp"
#include "test_support.hpp"

using namespace sio;
namespace st = sio::testing;
namespace fs = std::filesystem;

namespace {

PointCloud dense_scene(std::mt19937_64& rng, std::size_t n = 1200,
                       double extent = 8.0) {
  PointCloud cloud;
  std::uniform_real_distribution<double> u(-extent / 2.0, extent / 2.0);
  for (std::size_t i = 0; i < n; ++i)
    cloud.points.emplace_back(u(rng), u(rng), u(rng));
  return cloud;
}

}  // namespace

TEST_CASE("select_source prefers the higher overlap score") {
  std::mt19937_64 rng(163);
  const PointCloud scene = dense_scene(rng);
  const Pose truth{exp_so3(Vec3(0.0, 0.0, 0.04)), Vec3(0.3, -0.1, 0.05)};
  const PointCloud next = transform_cloud(inverse_se3(truth), scene);
  const double tau = 0.3;
  const Pose offset{Mat3::Identity(), Vec3(1.5, 0.0, 0.0)};

  SUBCASE("equal transforms tie toward the registration source") {
    const SourceSelection sel = select_source(truth, truth, scene, next, tau);
    CHECK(sel.source == LabelSource::Icp);
    CHECK(sel.s_icp == doctest::Approx(sel.s_pgo));
  }
  SUBCASE("registration candidate at the truth wins") {
    const Pose bad = compose_se3(truth, offset);
    const SourceSelection sel = select_source(truth, bad, scene, next, tau);
    CHECK(sel.source == LabelSource::Icp);
    CHECK(sel.s_icp > sel.s_pgo);
    CHECK((sel.dT.p - truth.p).norm() == 0.0);
  }
  SUBCASE("graph candidate at the truth wins the mirror case") {
    const Pose bad = compose_se3(truth, offset);
    const SourceSelection sel = select_source(bad, truth, scene, next, tau);
    CHECK(sel.source == LabelSource::Pgo);
    CHECK(sel.s_pgo > sel.s_icp);
  }
  SUBCASE("chosen score never lies below the rejected one") {
    for (int k = 0; k < 10; ++k) {
      const Pose a = compose_se3(truth, st::random_pose(rng, 0.2));
      const Pose b = compose_se3(truth, st::random_pose(rng, 0.2));
      const SourceSelection sel = select_source(a, b, scene, next, tau);
      const double chosen =
          sel.source == LabelSource::Icp ? sel.s_icp : sel.s_pgo;
      const double rejected =
          sel.source == LabelSource::Icp ? sel.s_pgo : sel.s_icp;
      CHECK(chosen >= rejected);
    }
  }
}

TEST_CASE("make_pseudo_states") {
  SUBCASE("identity transform keeps the pose, zero velocity") {
    Pose T;
    T.p = Vec3(1.0, 2.0, 3.0);
    const auto [next, v] = make_pseudo_states(T, Pose{}, 0.2);
    CHECK((next.p - T.p).norm() == 0.0);
    CHECK(v.norm() == 0.0);
  }
  SUBCASE("finite-difference velocity") {
    const Pose step{Mat3::Identity(), Vec3(1.0, 0.0, 0.0)};
    const auto [next, v] = make_pseudo_states(Pose{}, step, 0.5);
    CHECK((next.p - Vec3(1.0, 0.0, 0.0)).norm() == 0.0);
    CHECK((v - Vec3(2.0, 0.0, 0.0)).norm() == 0.0);
  }
  SUBCASE("nonpositive dt rejected") {
    CHECK_THROWS_AS(make_pseudo_states(Pose{}, Pose{}, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_pseudo_states(Pose{}, Pose{}, -0.1),
                    std::invalid_argument);
  }
  SUBCASE("segment-wise propagation equals one composed application") {
    std::mt19937_64 rng(167);
    std::vector<Pose> steps;
    for (int k = 0; k < 12; ++k) steps.push_back(st::random_pose(rng, 0.3));

    Pose chained;
    for (const auto& dT : steps)
      chained = make_pseudo_states(chained, dT, 0.2).first;

    Pose composed;
    for (const auto& dT : steps) composed = compose_se3(composed, dT);
    CHECK((chained.R - composed.R).norm() < 1e-9);
    CHECK((chained.p - composed.p).norm() < 1e-9);
  }
}

TEST_CASE("label table round-trips byte-exactly") {
  std::mt19937_64 rng(173);
  LabelSet set;
  set.init.t = 100.0;
  set.init.v = Vec3(0.1, 0.2, -0.3);
  Pose chain;
  for (int k = 0; k < 5; ++k) {
    PseudoLabel l;
    l.t_i = 100.0 + 0.2 * k;
    l.t_next = 100.0 + 0.2 * (k + 1);
    l.dT = st::random_pose(rng, 0.2);
    l.source = k % 2 ? LabelSource::Pgo : LabelSource::Icp;
    l.s_icp = 0.9 - 0.01 * k;
    l.s_pgo = 0.85 + 0.02 * k;
    const auto [next, v] = make_pseudo_states(chain, l.dT, 0.2);
    l.derived = NavState{next.R, v, next.p, l.t_next};
    chain = next;
    set.labels.push_back(l);
  }

  const fs::path dir = fs::temp_directory_path() / "sio_label_io_test";
  fs::create_directories(dir);
  const std::string p1 = (dir / "labels_a.txt").string();
  const std::string p2 = (dir / "labels_b.txt").string();
  save_labels(set, p1);
  const LabelSet back = load_labels(p1);
  save_labels(back, p2);

  std::ifstream f1(p1), f2(p2);
  const std::string s1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  REQUIRE(back.labels.size() == set.labels.size());
  CHECK(back.init.t == set.init.t);
  for (std::size_t k = 0; k < set.labels.size(); ++k) {
    CHECK(back.labels[k].source == set.labels[k].source);
    CHECK((back.labels[k].derived.p - set.labels[k].derived.p).norm() == 0.0);
    CHECK((back.labels[k].dT.R - set.labels[k].dT.R).norm() == 0.0);
  }
  fs::remove_all(dir);
}
