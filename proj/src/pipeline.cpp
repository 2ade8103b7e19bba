#include "sio/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>

#include "sio/pgo.hpp"
#include "sio/util.hpp"

namespace sio {

namespace fs = std::filesystem;
using nlohmann::json;

Stage parse_stage(const std::string& name) {
  if (name == "pseudo-label") return Stage::PseudoLabel;
  if (name == "gmm-fit") return Stage::GmmFit;
  if (name == "train") return Stage::Train;
  if (name == "infer") return Stage::Infer;
  if (name == "eval") return Stage::Eval;
  throw std::invalid_argument("unknown stage '" + name + "'");
}

KvDoc MotionModel::to_doc() const {
  KvDoc doc("motion-model", 1);
  doc.set_int("feature_dim", kWindowFeatureDim);
  doc.set_vector("norm_mean", norm.mean);
  doc.set_vector("norm_std", norm.stddev);
  doc.set_int("components", gmm.components);
  doc.set_vector("gmm_weight", gmm.weight);
  for (int g = 0; g < gmm.components; ++g) {
    doc.set_vector("gmm_mean_" + std::to_string(g), gmm.mean[g]);
    doc.set_vector("gmm_var_" + std::to_string(g), gmm.var[g]);
  }
  doc.set_double("beta", weights.beta);
  doc.set_vector("effective", weights.effective);
  doc.set_vector("raw_weight", weights.raw);
  doc.set_vector("balanced_weight", weights.normalized);
  return doc;
}

MotionModel MotionModel::from_doc(const KvDoc& doc) {
  if (doc.doc_type() != "motion-model")
    throw std::runtime_error("MotionModel: unexpected document type '" +
                             doc.doc_type() + "'");
  if (doc.get_int("feature_dim") != kWindowFeatureDim)
    throw std::runtime_error("MotionModel: incompatible feature dimension");
  MotionModel m;
  m.norm.mean = doc.get_vector("norm_mean");
  m.norm.stddev = doc.get_vector("norm_std");
  m.gmm.components = static_cast<int>(doc.get_int("components"));
  m.gmm.weight = doc.get_vector("gmm_weight");
  for (int g = 0; g < m.gmm.components; ++g) {
    m.gmm.mean.push_back(doc.get_vector("gmm_mean_" + std::to_string(g)));
    m.gmm.var.push_back(doc.get_vector("gmm_var_" + std::to_string(g)));
  }
  m.gmm.validate();
  m.weights.beta = doc.get_double("beta");
  m.weights.effective = doc.get_vector("effective");
  m.weights.raw = doc.get_vector("raw_weight");
  m.weights.normalized = doc.get_vector("balanced_weight");
  return m;
}

namespace {

struct PairData {
  std::vector<ImuSegment> segments;   // one per consecutive scan pair
  std::vector<double> dt;
  std::vector<Pose> icp;              // registration relative poses
  std::vector<double> tau;            // overlap threshold per pair
};

PairData make_pairs(const SequenceBundle& bundle, const PipelineConfig& cfg) {
  bundle.validate();
  if (bundle.scans.size() < 2)
    throw std::invalid_argument("pipeline: needs at least 2 scans");
  PairData pd;
  const std::size_t n = bundle.scans.size();
  pd.segments.reserve(n - 1);
  Pose init;  // previous relative motion seeds the next alignment
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double t0 = bundle.scans[i].t;
    const double t1 = bundle.scans[i + 1].t;
    pd.segments.push_back(slice_segment(bundle.imu, t0, t1));
    pd.dt.push_back(t1 - t0);
    const double tau = cfg.icp.overlap_tau > 0.0
                           ? cfg.icp.overlap_tau
                           : default_overlap_tau(bundle.scans[i].cloud);
    pd.tau.push_back(tau);
    const IcpResult res = icp_align(bundle.scans[i + 1].cloud,
                                    bundle.scans[i].cloud, init, cfg.icp);
    if (!res.converged)
      log_warn("icp pair " + std::to_string(i) + ": " + res.diagnostic);
    pd.icp.push_back(res.transform);
    init = res.transform;
  }
  return pd;
}

/// Windowed optimization over chains of chunk_nodes nodes with one shared
/// boundary node; the anchor of each window is the optimized state of the
/// previous one.
void solve_chunked(std::vector<NavState>& states,
                   const std::vector<IcpEdge>& icp_edges,
                   const std::vector<ImuEdge>& imu_edges, const Vec3& gravity,
                   const PipelineConfig& cfg, CostKind kind,
                   const std::function<void(std::vector<NavState>&, std::size_t,
                                            std::size_t)>& reseed) {
  const std::size_t n = states.size();
  std::size_t start = 0;
  while (start + 1 < n) {
    const std::size_t len =
        std::min<std::size_t>(cfg.chunk_nodes, n - start);
    reseed(states, start, start + len - 1);

    PoseGraph graph;
    graph.gravity = gravity;
    for (std::size_t k = 0; k < len; ++k) {
      graph.nodes.push_back(
          {states[start + k], static_cast<int>(k)});
    }
    for (const auto& e : icp_edges) {
      if (e.i >= static_cast<int>(start) &&
          e.i + 1 < static_cast<int>(start + len))
        graph.icp_edges.push_back(
            {e.i - static_cast<int>(start), e.dT, e.overlap});
    }
    for (const auto& e : imu_edges) {
      if (e.i >= static_cast<int>(start) &&
          e.i + 1 < static_cast<int>(start + len))
        graph.imu_edges.push_back(
            {e.i - static_cast<int>(start), e.delta, e.dt});
    }
    const SolveReport report = solve_lm(graph, cfg.weights, kind, cfg.solver);
    log_debug("pgo window [" + std::to_string(start) + ", " +
              std::to_string(start + len - 1) + "]: cost " +
              fmt_double(report.initial_cost) + " -> " +
              fmt_double(report.final_cost) + " (" + report.reason + ")");
    for (std::size_t k = 1; k < len; ++k)
      states[start + k] = graph.nodes[k].state;
    start += len - 1;
  }
}

}  // namespace

LabelSet build_pseudo_labels(const SequenceBundle& bundle,
                             const PipelineConfig& cfg) {
  const PairData pd = make_pairs(bundle, cfg);
  const std::size_t n_pairs = pd.segments.size();

  // Self-supervised anchor: identity pose at the first scan; the initial
  // velocity estimate is the first registration displacement rate.
  LabelSet set;
  set.init.t = bundle.scans.front().t;
  set.init.v = pd.icp.front().p / pd.dt.front();

  // Inertial edges from raw (uncorrected) preintegration.
  std::vector<ImuEdge> imu_edges(n_pairs);
  std::vector<IcpEdge> icp_edges(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    imu_edges[i] = {static_cast<int>(i), preintegrate(pd.segments[i]),
                    pd.dt[i]};
    icp_edges[i] = {static_cast<int>(i), pd.icp[i], 1.0};
  }

  // Node states seeded from the registration chain inside each window.
  std::vector<NavState> states(n_pairs + 1);
  states[0] = set.init;
  auto reseed = [&](std::vector<NavState>& s, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      s[i + 1].R = s[i].R * pd.icp[i].R;
      s[i + 1].p = s[i].R * pd.icp[i].p + s[i].p;
      s[i + 1].t = s[i].t + pd.dt[i];
      s[i + 1].v = (s[i + 1].p - s[i].p) / pd.dt[i];
    }
  };
  solve_chunked(states, icp_edges, imu_edges, bundle.meta.gravity, cfg,
                CostKind::Training, reseed);

  // Per-segment source selection, then propagation of the chosen transforms.
  Pose chain{set.init.R, set.init.p};
  std::size_t from_icp = 0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const Pose dT_pgo{states[i].R.transpose() * states[i + 1].R,
                      states[i].R.transpose() * (states[i + 1].p - states[i].p)};
    const SourceSelection sel =
        select_source(pd.icp[i], dT_pgo, bundle.scans[i].cloud,
                      bundle.scans[i + 1].cloud, pd.tau[i]);
    const double chosen = sel.source == LabelSource::Icp ? sel.s_icp : sel.s_pgo;
    const double rejected = sel.source == LabelSource::Icp ? sel.s_pgo : sel.s_icp;
    if (chosen < rejected)
      throw std::logic_error("pseudo-label selection picked the lower score");
    if (sel.source == LabelSource::Icp) ++from_icp;
    log_debug("segment " + std::to_string(i) + ": " +
              (sel.source == LabelSource::Icp ? "icp" : "pgo") + " (" +
              fmt_double(sel.s_icp) + " vs " + fmt_double(sel.s_pgo) + ")");

    PseudoLabel label;
    label.t_i = bundle.scans[i].t;
    label.t_next = bundle.scans[i + 1].t;
    label.dT = sel.dT;
    label.source = sel.source;
    label.s_icp = sel.s_icp;
    label.s_pgo = sel.s_pgo;
    const auto [T_next, v_next] = make_pseudo_states(chain, sel.dT, pd.dt[i]);
    label.derived = NavState{T_next.R, v_next, T_next.p, label.t_next};
    set.labels.push_back(label);
    chain = T_next;
  }
  log_info("pseudo-labels: " + std::to_string(from_icp) + "/" +
           std::to_string(n_pairs) + " segments from registration");
  return set;
}

MotionModel fit_motion_model(const SequenceBundle& bundle,
                             const PipelineConfig& cfg,
                             std::vector<BicRow>* bic_table) {
  bundle.validate();
  if (bundle.scans.size() < 2)
    throw std::invalid_argument("fit_motion_model: needs at least 2 scans");
  std::vector<FeatureVec> raw;
  for (std::size_t i = 0; i + 1 < bundle.scans.size(); ++i) {
    const ImuSegment seg =
        slice_segment(bundle.imu, bundle.scans[i].t, bundle.scans[i + 1].t);
    raw.push_back(window_features(seg));
  }
  MotionModel motion;
  motion.norm = compute_norm_stats(raw);
  std::vector<MotionDescriptor> descriptors;
  descriptors.reserve(raw.size());
  for (const auto& f : raw) {
    MotionDescriptor d;
    d.z = (f - motion.norm.mean).cwiseQuotient(motion.norm.stddev);
    descriptors.push_back(d);
  }
  const GmmFit fit =
      fit_gmm(descriptors, cfg.gmm.candidates, cfg.seed, cfg.gmm.gmm);
  motion.gmm = fit.model;
  motion.weights = balance_weights(motion.gmm, descriptors, cfg.gmm.beta);
  if (bic_table) *bic_table = fit.bic_table;
  return motion;
}

WindowModel train_correction_model(const SequenceBundle& bundle,
                                   const LabelSet& labels,
                                   const MotionModel& motion,
                                   const PipelineConfig& cfg,
                                   TrainReport* report) {
  if (labels.labels.empty())
    throw std::invalid_argument("train_correction_model: no labels");

  // Label chain as supervisory states. The stored velocity labels are
  // trailing finite differences and lag the instantaneous velocity by about
  // half an interval of acceleration; used directly as base states that lag
  // leaks into the position residual and the accelerometer correction
  // absorbs it. Centered differences at interior states remove the bias.
  std::vector<NavState> chain;
  chain.push_back(labels.init);
  for (const auto& l : labels.labels) chain.push_back(l.derived);
  std::vector<Vec3> vel(chain.size());
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 < chain.size() ? i + 1 : i;
    vel[i] = (chain[hi].p - chain[lo].p) / (chain[hi].t - chain[lo].t);
  }
  for (std::size_t i = 0; i < chain.size(); ++i) chain[i].v = vel[i];

  std::vector<TrainItem> items;
  items.reserve(labels.labels.size());
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    TrainItem item;
    item.seg = slice_segment(bundle.imu, labels.labels[i].t_i,
                             labels.labels[i].t_next);
    item.base = chain[i];
    item.target = chain[i + 1];
    MotionDescriptor d;
    d.z = (window_features(item.seg) - motion.norm.mean)
              .cwiseQuotient(motion.norm.stddev);
    item.weight = sample_weight(motion.gmm, motion.weights, d);
    items.push_back(std::move(item));
  }

  WindowModel model(cfg.train.hidden_width);
  model.set_feature_norm(motion.norm.mean, motion.norm.stddev);
  const TrainReport r =
      train(model, items, bundle.meta.gravity, cfg.train.train);
  if (report) *report = r;
  return model;
}

InferenceResult run_inference(const SequenceBundle& bundle,
                              const CorrectionModel& model,
                              const PipelineConfig& cfg) {
  const PairData pd = make_pairs(bundle, cfg);
  const std::size_t n_pairs = pd.segments.size();
  const Vec3 g = bundle.meta.gravity;

  // All methods share the initial state (ground truth when present).
  NavState anchor;
  anchor.t = bundle.scans.front().t;
  if (bundle.ground_truth) anchor = bundle.ground_truth->states.front();

  std::vector<ImuEdge> imu_edges(n_pairs);
  std::vector<IcpEdge> icp_edges(n_pairs);
  std::vector<PreintDelta> raw_deltas(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const CorrectionOutput corr = model.predict(pd.segments[i]);
    PreintDelta delta = preintegrate(correct_segment(pd.segments[i], corr));
    delta.cov = propagate_covariance(pd.segments[i], corr, Mat9::Zero());
    imu_edges[i] = {static_cast<int>(i), delta, pd.dt[i]};
    const double s = symmetric_overlap(pd.icp[i], bundle.scans[i].cloud,
                                       bundle.scans[i + 1].cloud, pd.tau[i]);
    icp_edges[i] = {static_cast<int>(i), pd.icp[i], s};
    raw_deltas[i] = preintegrate(pd.segments[i]);
  }

  // Node seeds: corrected inertial dead reckoning from the window anchor.
  std::vector<NavState> states(n_pairs + 1);
  states[0] = anchor;
  auto reseed = [&](std::vector<NavState>& s, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      s[i + 1] = propagate_state(s[i], imu_edges[i].delta, g, pd.dt[i]);
  };
  solve_chunked(states, icp_edges, imu_edges, g, cfg, CostKind::Inference,
                reseed);

  InferenceResult result;
  result.fused.states = states;

  NavState dead = anchor;
  result.dead_reckoning.states.push_back(dead);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    dead = propagate_state(dead, raw_deltas[i], g, pd.dt[i]);
    result.dead_reckoning.states.push_back(dead);
  }

  // Fixed-interval protocol: re-run each interval from the reference
  // initial conditions, with and without corrections.
  if (bundle.ground_truth) {
    for (std::size_t i = 0; i < n_pairs; ++i) {
      const auto gt_start = state_at(*bundle.ground_truth,
                                     bundle.scans[i].t, cfg.eval.assoc_tol_s);
      if (!gt_start) continue;
      result.rpe_est.push_back(
          {*gt_start,
           propagate_state(*gt_start, imu_edges[i].delta, g, pd.dt[i])});
      result.rpe_baseline.push_back(
          {*gt_start, propagate_state(*gt_start, raw_deltas[i], g, pd.dt[i])});
    }
  }
  return result;
}

EvalOutput evaluate_run(const SequenceBundle& bundle, const Trajectory& est,
                        const Trajectory& baseline,
                        const std::vector<IntervalSegment>& rpe_est,
                        const std::vector<IntervalSegment>& rpe_baseline,
                        const PipelineConfig& cfg) {
  if (!bundle.ground_truth)
    throw std::runtime_error("eval: no ground truth available");
  const Trajectory& gt = *bundle.ground_truth;

  EvalOutput out;
  out.est.interval = out.baseline.interval = cfg.eval.rpe_interval_s;
  out.est.ape = ape(est, gt, cfg.eval.assoc_tol_s);
  out.baseline.ape = ape(baseline, gt, cfg.eval.assoc_tol_s);
  out.est.count = static_cast<int>(est.size());
  out.baseline.count = static_cast<int>(baseline.size());

  RpeDiagnostics diag;
  out.est.rpe = rpe_fixed_interval(rpe_est, gt, cfg.eval.assoc_tol_s, &diag);
  out.est.rpe_count = diag.used;
  out.est.rpe_skipped = diag.skipped;
  out.baseline.rpe =
      rpe_fixed_interval(rpe_baseline, gt, cfg.eval.assoc_tol_s, &diag);
  out.baseline.rpe_count = diag.used;
  out.baseline.rpe_skipped = diag.skipped;
  return out;
}

void save_intervals(const std::vector<IntervalSegment>& segs,
                    const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << "#intervals v1\n# start(t R9 v3 p3) end(t R9 v3 p3)\n";
  auto put_state = [&os](const NavState& s) {
    os << ' ' << fmt_double(s.t);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) os << ' ' << fmt_double(s.R(r, c));
    for (int i = 0; i < 3; ++i) os << ' ' << fmt_double(s.v[i]);
    for (int i = 0; i < 3; ++i) os << ' ' << fmt_double(s.p[i]);
  };
  for (const auto& seg : segs) {
    os << "interval";
    put_state(seg.start);
    put_state(seg.end);
    os << '\n';
  }
}

std::vector<IntervalSegment> load_intervals(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read '" + path + "'");
  std::vector<IntervalSegment> segs;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto toks = split_ws(line);
    if (toks.size() != 33 || toks[0] != "interval")
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 'interval' + 32 fields");
    auto get_state = [&](std::size_t off) {
      NavState s;
      s.t = parse_double(toks[off]);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          s.R(r, c) = parse_double(toks[off + 1 + 3 * r + c]);
      for (int i = 0; i < 3; ++i) s.v[i] = parse_double(toks[off + 10 + i]);
      for (int i = 0; i < 3; ++i) s.p[i] = parse_double(toks[off + 13 + i]);
      return s;
    };
    segs.push_back({get_state(1), get_state(17)});
  }
  return segs;
}

namespace {

std::string need(const fs::path& dir, const char* name, const char* stage) {
  const fs::path p = dir / name;
  if (!fs::exists(p))
    throw std::runtime_error("missing artifact '" + p.string() +
                             "'; run the " + std::string(stage) +
                             " stage first");
  return p.string();
}

}  // namespace

EvalOutput run_pipeline(const SequenceBundle& bundle, const PipelineConfig& cfg,
                        const std::set<Stage>& stages,
                        const std::string& out_dir) {
  cfg.validate();
  const fs::path dir(out_dir);
  fs::create_directories(dir);

  LabelSet labels;
  bool have_labels = false;
  if (stages.count(Stage::PseudoLabel)) {
    log_info("stage pseudo-label");
    labels = build_pseudo_labels(bundle, cfg);
    save_labels(labels, (dir / "labels.txt").string());
    have_labels = true;
  }

  MotionModel motion;
  bool have_motion = false;
  if (stages.count(Stage::GmmFit)) {
    log_info("stage gmm-fit");
    std::vector<BicRow> bic;
    motion = fit_motion_model(bundle, cfg, &bic);
    motion.to_doc().save((dir / "motion.model").string());
    save_bic_table(bic, (dir / "bic.txt").string());
    have_motion = true;
  }

  if (stages.count(Stage::Train)) {
    log_info("stage train");
    if (!have_labels) {
      labels = load_labels(need(dir, "labels.txt", "pseudo-label"));
      have_labels = true;
    }
    if (!have_motion) {
      motion = MotionModel::from_doc(
          KvDoc::load(need(dir, "motion.model", "gmm-fit")));
      have_motion = true;
    }
    TrainReport report;
    const WindowModel model =
        train_correction_model(bundle, labels, motion, cfg, &report);
    model.to_doc().save((dir / "model.ckpt").string());
    std::ofstream os((dir / "loss_history.txt").string(), std::ios::binary);
    os << "#loss-history v1\n# epoch loss\n";
    for (std::size_t e = 0; e < report.loss_history.size(); ++e)
      os << e << ' ' << fmt_double(report.loss_history[e]) << '\n';
  }

  if (stages.count(Stage::Infer)) {
    log_info("stage infer");
    const WindowModel model =
        WindowModel::from_doc(KvDoc::load(need(dir, "model.ckpt", "train")));
    const InferenceResult inf = run_inference(bundle, model, cfg);
    save_tum(inf.fused, (dir / "est.tum").string());
    save_states_csv(inf.fused, (dir / "est_states.csv").string());
    save_tum(inf.dead_reckoning, (dir / "baseline.tum").string());
    save_states_csv(inf.dead_reckoning,
                    (dir / "baseline_states.csv").string());
    save_intervals(inf.rpe_est, (dir / "rpe_est.csv").string());
    save_intervals(inf.rpe_baseline, (dir / "rpe_baseline.csv").string());
  }

  EvalOutput out;
  if (stages.count(Stage::Eval)) {
    log_info("stage eval");
    const Trajectory est =
        load_states_csv(need(dir, "est_states.csv", "infer"));
    const Trajectory baseline =
        load_states_csv(need(dir, "baseline_states.csv", "infer"));
    const auto rpe_est = load_intervals(need(dir, "rpe_est.csv", "infer"));
    const auto rpe_baseline =
        load_intervals(need(dir, "rpe_baseline.csv", "infer"));
    out = evaluate_run(bundle, est, baseline, rpe_est, rpe_baseline, cfg);

    json j;
    j["format_version"] = 1;
    j["ape"] = out.est.ape;
    j["rpe"] = out.est.rpe;
    j["rpe_interval_s"] = out.est.interval;
    j["pose_count"] = out.est.count;
    j["rpe_count"] = out.est.rpe_count;
    j["rpe_skipped"] = out.est.rpe_skipped;
    j["baseline"] = {{"ape", out.baseline.ape}, {"rpe", out.baseline.rpe}};
    j["improvement"] = {
        {"ape_ratio", out.est.ape / out.baseline.ape},
        {"rpe_ratio", out.est.rpe / out.baseline.rpe},
    };
    std::ofstream os((dir / "metrics.json").string(), std::ios::binary);
    os << j.dump(2) << '\n';
  }
  return out;
}

}  // namespace sio
