#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sio/bundle.hpp"
#include "sio/config.hpp"
#include "sio/kvdoc.hpp"
#include "sio/sim.hpp"
#include "test_support.hpp"

using namespace sio;
namespace fs = std::filesystem;

namespace {

SimConfig small_sim() {
  SimConfig cfg;
  cfg.duration_s = 10.0;
  cfg.scan_rate_hz = 5.0;
  cfg.imu_rate_hz = 200.0;
  cfg.landmark_count = 2000;
  cfg.room_extent_m = 40.0;
  cfg.sensing_range_m = 18.0;
  cfg.points_per_scan = 400;
  cfg.seed = 5;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("analytic trajectories are kinematically consistent") {
  SimConfig cfg = small_sim();
  cfg.duration_s = 60.0;
  const double h = 1e-5;
  for (const auto recipe :
       {TrajectoryRecipe::FigureEight, TrajectoryRecipe::RandomSmooth,
        TrajectoryRecipe::Polyline}) {
    cfg.trajectory = recipe;
    for (double t : {1.3, 7.9, 23.4, 41.7}) {
      const auto mid = sample_trajectory(cfg, t);
      const auto lo = sample_trajectory(cfg, t - h);
      const auto hi = sample_trajectory(cfg, t + h);
      // Central differences of the closed forms.
      CHECK(((hi.p - lo.p) / (2.0 * h) - mid.v).norm() < 1e-6);
      CHECK(((hi.v - lo.v) / (2.0 * h) - mid.a).norm() < 1e-6);
      const Vec3 w_fd = log_so3(lo.R.transpose() * hi.R) / (2.0 * h);
      CHECK((w_fd - mid.omega_body).norm() < 1e-6);
    }
  }
}

TEST_CASE("polyline starts at rest and level") {
  SimConfig cfg = small_sim();
  cfg.trajectory = TrajectoryRecipe::Polyline;
  const auto s = sample_trajectory(cfg, 0.0);
  CHECK(s.v.norm() == 0.0);
  CHECK(s.a.norm() == 0.0);
  CHECK(s.omega_body.norm() == 0.0);
  // A static instant measures exactly minus gravity in the body frame.
  const SequenceBundle bundle = simulate(cfg);
  const Vec3 want = s.R.transpose() * (-cfg.gravity);
  CHECK((bundle.imu.front().accel - want).norm() < 1e-12);
  CHECK(bundle.imu.front().gyro.norm() == 0.0);
}

TEST_CASE("clean simulation reproduces ground truth through preintegration") {
  SimConfig cfg;
  cfg.duration_s = 120.0;
  cfg.landmark_count = 1000;
  cfg.points_per_scan = 100;
  cfg.seed = 7;
  const SequenceBundle bundle = simulate(cfg);
  REQUIRE(bundle.ground_truth);
  const Trajectory& gt = *bundle.ground_truth;

  for (std::size_t i = 0; i + 1 < gt.states.size(); i += 25) {
    const ImuSegment seg =
        slice_segment(bundle.imu, gt.states[i].t, gt.states[i + 1].t);
    const PreintDelta delta = preintegrate(seg);
    const NavState pred = propagate_state(
        gt.states[i], delta, cfg.gravity, gt.states[i + 1].t - gt.states[i].t);
    CHECK((pred.p - gt.states[i + 1].p).norm() <= 1e-4);
    CHECK(rotation_distance(pred.R, gt.states[i + 1].R) <= 1e-4);
    CHECK((pred.v - gt.states[i + 1].v).norm() <= 5e-4);
  }
}

TEST_CASE("simulation applies bias and is seed-reproducible") {
  SimConfig cfg = small_sim();
  cfg.gyro_bias = Vec3(0.02, -0.01, 0.005);
  cfg.accel_bias = Vec3(0.05, 0.0, -0.02);
  const SequenceBundle a = simulate(cfg);
  const SequenceBundle b = simulate(cfg);
  REQUIRE(a.imu.size() == b.imu.size());
  for (std::size_t i = 0; i < a.imu.size(); i += 97) {
    CHECK((a.imu[i].gyro - b.imu[i].gyro).norm() == 0.0);
    CHECK((a.imu[i].accel - b.imu[i].accel).norm() == 0.0);
  }
  // Against a bias-free run of the same seed, every sample shifts by
  // exactly the configured bias.
  SimConfig clean = cfg;
  clean.gyro_bias = Vec3::Zero();
  clean.accel_bias = Vec3::Zero();
  const SequenceBundle c = simulate(clean);
  for (std::size_t i = 0; i < a.imu.size(); i += 53) {
    CHECK((a.imu[i].gyro - c.imu[i].gyro - cfg.gyro_bias).norm() < 1e-14);
    CHECK((a.imu[i].accel - c.imu[i].accel - cfg.accel_bias).norm() < 1e-14);
  }
}

TEST_CASE("bundle export and ingest round trip") {
  SimConfig cfg = small_sim();
  cfg.gyro_noise_std = 1e-3;
  cfg.accel_noise_std = 1e-2;
  const SequenceBundle bundle = simulate(cfg);
  const fs::path dir = fs::temp_directory_path() / "sio_bundle_io_test";
  fs::remove_all(dir);
  export_bundle(bundle, dir.string());
  const SequenceBundle back = ingest_bundle(dir.string());

  REQUIRE(back.imu.size() == bundle.imu.size());
  for (std::size_t i = 0; i < bundle.imu.size(); i += 131) {
    CHECK(back.imu[i].t == bundle.imu[i].t);
    CHECK((back.imu[i].gyro - bundle.imu[i].gyro).norm() == 0.0);
    CHECK((back.imu[i].accel - bundle.imu[i].accel).norm() == 0.0);
  }
  REQUIRE(back.scans.size() == bundle.scans.size());
  for (std::size_t i = 0; i < bundle.scans.size(); i += 13) {
    CHECK(back.scans[i].t == bundle.scans[i].t);
    REQUIRE(back.scans[i].cloud.size() == bundle.scans[i].cloud.size());
    CHECK((back.scans[i].cloud.points[0] - bundle.scans[i].cloud.points[0])
              .norm() == 0.0);
  }
  REQUIRE(back.ground_truth);
  CHECK(back.ground_truth->size() == bundle.ground_truth->size());
  CHECK((back.meta.gravity - bundle.meta.gravity).norm() == 0.0);

  SUBCASE("same seed exports byte-identical artifacts") {
    const fs::path dir2 = fs::temp_directory_path() / "sio_bundle_io_test2";
    fs::remove_all(dir2);
    export_bundle(simulate(cfg), dir2.string());
    for (const char* name : {"imu.csv", "scans.txt", "gt.tum",
                             "gt_states.csv", "scans/scan_000003.xyz"}) {
      CHECK(slurp(dir / name) == slurp(dir2 / name));
    }
    fs::remove_all(dir2);
  }
  fs::remove_all(dir);
}

TEST_CASE("ingest reports malformed input precisely") {
  SimConfig cfg = small_sim();
  cfg.duration_s = 2.0;
  const SequenceBundle bundle = simulate(cfg);
  const fs::path dir = fs::temp_directory_path() / "sio_bad_bundle_test";
  fs::remove_all(dir);
  export_bundle(bundle, dir.string());

  SUBCASE("non-numeric csv cell names the line") {
    std::ofstream os(dir / "imu.csv", std::ios::app);
    os << "3.0,0,0,abc,0,0,0\n";
    os.close();
    try {
      ingest_bundle(dir.string());
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("imu.csv") != std::string::npos);
      CHECK(msg.find(":403") != std::string::npos);  // header + 401 samples
    }
  }
  SUBCASE("scan outside the imu span names the scan") {
    std::ofstream os(dir / "scans.txt", std::ios::app);
    os << "99.0 scans/scan_000000.xyz\n";
    os.close();
    try {
      ingest_bundle(dir.string());
      FAIL("expected an exception");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("not bracketed") != std::string::npos);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("key-value documents") {
  SUBCASE("file round trip is byte-exact") {
    KvDoc doc("demo", 3);
    doc.set_int("count", 42);
    doc.set_double("value", 0.1 + 0.2);
    doc.set_string("name", "hello world");
    Eigen::VectorXd v(3);
    v << 1.0, -2.5, 3e-17;
    doc.set_vector("vec", v);

    const fs::path dir = fs::temp_directory_path() / "sio_kvdoc_test";
    fs::create_directories(dir);
    const std::string p1 = (dir / "a.kv").string();
    const std::string p2 = (dir / "b.kv").string();
    doc.save(p1);
    const KvDoc back = KvDoc::load(p1);
    back.save(p2);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(back.doc_type() == "demo");
    CHECK(back.version() == 3);
    CHECK(back.get_int("count") == 42);
    CHECK(back.get_double("value") == 0.1 + 0.2);
    CHECK(back.get_string("name") == "hello world");
    CHECK((back.get_vector("vec") - v).norm() == 0.0);
    fs::remove_all(dir);
  }
  SUBCASE("missing key and malformed document") {
    const KvDoc doc = KvDoc::parse("#kv demo v1\nx = 1\n");
    CHECK(doc.has("x"));
    CHECK_FALSE(doc.has("y"));
    CHECK_THROWS_AS(doc.get_double("y"), std::out_of_range);
    CHECK_THROWS_AS(KvDoc::parse("no header\n"), std::runtime_error);
    CHECK_THROWS_AS(KvDoc::parse("#kv demo v1\nnot a pair\n"),
                    std::runtime_error);
  }
}

TEST_CASE("config parsing") {
  SUBCASE("defaults on an empty document") {
    const PipelineConfig cfg = parse_config("{}");
    CHECK(cfg.seed == 1);
    CHECK(cfg.weights.w1 == 10.0);
    CHECK(cfg.chunk_nodes == 20);
    CHECK(cfg.gmm.beta == 0.999);
    CHECK(cfg.train.train.epsilon == 1e-3);
  }
  SUBCASE("values override defaults") {
    const PipelineConfig cfg = parse_config(
        R"({"seed": 9, "pgo": {"w1": 2.5, "chunk_nodes": 10},
            "train": {"epochs": 7, "gradient_mode": "finite-difference"},
            "sim": {"trajectory": "random-smooth", "gyro_bias": [0.1, 0, 0]}})");
    CHECK(cfg.seed == 9);
    CHECK(cfg.weights.w1 == 2.5);
    CHECK(cfg.chunk_nodes == 10);
    CHECK(cfg.train.train.epochs == 7);
    CHECK(cfg.sim.trajectory == TrajectoryRecipe::RandomSmooth);
    CHECK(cfg.sim.gyro_bias.x() == 0.1);
  }
  SUBCASE("unknown keys rejected with their path") {
    try {
      parse_config(R"({"pgo": {"w1": 1.0, "bogus": 2}})");
      FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("pgo.bogus") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config(R"({"unknown_top": 1})"),
                    std::invalid_argument);
  }
  SUBCASE("invariant violations rejected") {
    CHECK_THROWS_AS(parse_config(R"({"gmm": {"beta": 1.5}})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"pgo": {"w1": -1.0}})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        parse_config(R"({"sim": {"imu_rate_hz": 20, "scan_rate_hz": 5}})"),
        std::invalid_argument);
  }
  SUBCASE("dump and reparse is stable") {
    PipelineConfig cfg;
    cfg.seed = 123;
    cfg.weights.w4 = 2.75;
    const PipelineConfig back = parse_config(dump_config(cfg));
    CHECK(back.seed == 123);
    CHECK(back.weights.w4 == 2.75);
    CHECK(dump_config(back) == dump_config(cfg));
  }
}
