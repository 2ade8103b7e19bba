#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sio/pipeline.hpp"
#include "sio/sim.hpp"

using namespace sio;
namespace fs = std::filesystem;

namespace {

PipelineConfig tiny_config() {
  PipelineConfig cfg;
  cfg.seed = 21;
  cfg.sim.seed = 21;
  cfg.sim.duration_s = 6.0;
  cfg.sim.landmark_count = 2000;
  cfg.sim.points_per_scan = 400;
  cfg.sim.gyro_bias = Vec3(0.02, 0.0, -0.01);
  cfg.sim.accel_bias = Vec3(0.04, -0.02, 0.0);
  cfg.gmm.candidates = {1, 2};
  cfg.train.train.epochs = 2;
  cfg.train.hidden_width = 2;
  cfg.chunk_nodes = 8;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("pipeline stages chain through on-disk artifacts") {
  const PipelineConfig cfg = tiny_config();
  const SequenceBundle bundle = simulate(cfg.sim);
  const fs::path dir = fs::temp_directory_path() / "sio_pipeline_test";
  fs::remove_all(dir);

  SUBCASE("stages run one at a time against saved artifacts") {
    run_pipeline(bundle, cfg, {Stage::PseudoLabel}, dir.string());
    CHECK(fs::exists(dir / "labels.txt"));
    run_pipeline(bundle, cfg, {Stage::GmmFit}, dir.string());
    CHECK(fs::exists(dir / "motion.model"));
    CHECK(fs::exists(dir / "bic.txt"));
    run_pipeline(bundle, cfg, {Stage::Train}, dir.string());
    CHECK(fs::exists(dir / "model.ckpt"));
    run_pipeline(bundle, cfg, {Stage::Infer}, dir.string());
    CHECK(fs::exists(dir / "est.tum"));
    const EvalOutput out =
        run_pipeline(bundle, cfg, {Stage::Eval}, dir.string());
    CHECK(fs::exists(dir / "metrics.json"));
    CHECK(out.est.ape >= 0.0);
    CHECK(out.baseline.ape > 0.0);

    // Stage re-runs are idempotent: identical bytes.
    const std::string labels_once = slurp(dir / "labels.txt");
    run_pipeline(bundle, cfg, {Stage::PseudoLabel}, dir.string());
    CHECK(slurp(dir / "labels.txt") == labels_once);
  }

  SUBCASE("missing dependencies name the absent artifact") {
    try {
      run_pipeline(bundle, cfg, {Stage::Train}, dir.string());
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("labels.txt") != std::string::npos);
      CHECK(msg.find("pseudo-label") != std::string::npos);
    }
    try {
      run_pipeline(bundle, cfg, {Stage::Infer}, dir.string());
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("model.ckpt") != std::string::npos);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("eval without ground truth fails explicitly, other stages run") {
  const PipelineConfig cfg = tiny_config();
  SequenceBundle bundle = simulate(cfg.sim);
  bundle.ground_truth.reset();
  const fs::path dir = fs::temp_directory_path() / "sio_pipeline_nogt_test";
  fs::remove_all(dir);

  run_pipeline(bundle, cfg,
               {Stage::PseudoLabel, Stage::GmmFit, Stage::Train, Stage::Infer},
               dir.string());
  CHECK(fs::exists(dir / "est.tum"));
  try {
    run_pipeline(bundle, cfg, {Stage::Eval}, dir.string());
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("no ground truth") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("scan before the first imu sample is a bracketing error") {
  const PipelineConfig cfg = tiny_config();
  const SequenceBundle bundle = simulate(cfg.sim);
  const fs::path dir = fs::temp_directory_path() / "sio_pipeline_bracket_test";
  fs::remove_all(dir);
  export_bundle(bundle, dir.string());

  // Prepend a scan stamped before the stream begins (keeps ordering valid).
  const std::string index = slurp(dir / "scans.txt");
  std::ofstream os(dir / "scans.txt", std::ios::binary | std::ios::trunc);
  os << "-1 scans/scan_000000.xyz\n" << index;
  os.close();
  try {
    ingest_bundle(dir.string());
    FAIL("expected an exception");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("scan 0") != std::string::npos);
    CHECK(msg.find("not bracketed") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("motion model document round trip is byte-exact") {
  const PipelineConfig cfg = tiny_config();
  const SequenceBundle bundle = simulate(cfg.sim);
  const MotionModel motion = fit_motion_model(bundle, cfg);
  const std::string once = motion.to_doc().serialize();
  const MotionModel back = MotionModel::from_doc(KvDoc::parse(once));
  CHECK(back.to_doc().serialize() == once);
  CHECK(back.gmm.components == motion.gmm.components);
  CHECK((back.weights.normalized - motion.weights.normalized).norm() == 0.0);
}

TEST_CASE("interval table round trip") {
  std::vector<IntervalSegment> segs;
  for (int i = 0; i < 4; ++i) {
    IntervalSegment s;
    s.start.t = 0.2 * i;
    s.start.p = Vec3(i, 0.5 * i, 0.0);
    s.end.t = 0.2 * (i + 1);
    s.end.p = Vec3(i + 0.1, 0.0, 1.0);
    segs.push_back(s);
  }
  const fs::path dir = fs::temp_directory_path() / "sio_interval_io_test";
  fs::create_directories(dir);
  const std::string path = (dir / "intervals.csv").string();
  save_intervals(segs, path);
  const auto back = load_intervals(path);
  REQUIRE(back.size() == segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i) {
    CHECK(back[i].start.t == segs[i].start.t);
    CHECK((back[i].end.p - segs[i].end.p).norm() == 0.0);
  }
  fs::remove_all(dir);
}
