// End-to-end pipeline stages over a sequence bundle, with on-disk artifacts
// between stages:
//   pseudo-label  labels.txt
//   gmm-fit       motion.model, bic.txt
//   train         model.ckpt, loss_history.txt
//   infer         est.tum, est_states.csv, baseline.tum, baseline_states.csv,
//                 rpe_est.csv, rpe_baseline.csv
//   eval          metrics.json

#ifndef SIO_PIPELINE_HPP
#define SIO_PIPELINE_HPP

#include <set>
#include <string>
#include <vector>

#include "sio/bundle.hpp"
#include "sio/config.hpp"
#include "sio/correction.hpp"
#include "sio/eval.hpp"
#include "sio/motion.hpp"
#include "sio/pseudolabel.hpp"

namespace sio {

enum class Stage { PseudoLabel, GmmFit, Train, Infer, Eval };

/// Parses "pseudo-label", "gmm-fit", "train", "infer", "eval".
Stage parse_stage(const std::string& name);

/// Fitted motion statistics shared by training and analysis: feature
/// standardization, mixture model and class-balanced weights.
struct MotionModel {
  NormStats norm;
  GmmModel gmm;
  BalanceWeights weights;

  KvDoc to_doc() const;
  static MotionModel from_doc(const KvDoc& doc);
};

/// Scan registration + windowed graph optimization + overlap-based source
/// selection, then propagation into supervisory world-frame states.
LabelSet build_pseudo_labels(const SequenceBundle& bundle,
                             const PipelineConfig& cfg);

/// Motion descriptors of all scan-to-scan windows, mixture fit with BIC
/// selection and class-balanced weights.
MotionModel fit_motion_model(const SequenceBundle& bundle,
                             const PipelineConfig& cfg,
                             std::vector<BicRow>* bic_table = nullptr);

/// Assembles weighted training items from labels + motion model and runs
/// the trainer. Returns the model and per-epoch loss history.
WindowModel train_correction_model(const SequenceBundle& bundle,
                                   const LabelSet& labels,
                                   const MotionModel& motion,
                                   const PipelineConfig& cfg,
                                   TrainReport* report = nullptr);

struct InferenceResult {
  Trajectory fused;           // corrected preintegration + adaptive PGO
  Trajectory dead_reckoning;  // uncorrected baseline, same initial state
  std::vector<IntervalSegment> rpe_est;       // per-interval re-runs
  std::vector<IntervalSegment> rpe_baseline;  // (empty without ground truth)
};

InferenceResult run_inference(const SequenceBundle& bundle,
                              const CorrectionModel& model,
                              const PipelineConfig& cfg);

struct EvalOutput {
  MetricsReport est;
  MetricsReport baseline;
};

EvalOutput evaluate_run(const SequenceBundle& bundle, const Trajectory& est,
                        const Trajectory& baseline,
                        const std::vector<IntervalSegment>& rpe_est,
                        const std::vector<IntervalSegment>& rpe_baseline,
                        const PipelineConfig& cfg);

/// Interval-segment table io for the RPE protocol artifacts.
void save_intervals(const std::vector<IntervalSegment>& segs,
                    const std::string& path);
std::vector<IntervalSegment> load_intervals(const std::string& path);

/// Runs the requested stages in dependency order, reading artifacts of
/// earlier stages from out_dir when a stage is not part of this run.
/// Missing dependencies fail naming the absent artifact. Returns the eval
/// metrics when the eval stage runs.
EvalOutput run_pipeline(const SequenceBundle& bundle, const PipelineConfig& cfg,
                        const std::set<Stage>& stages,
                        const std::string& out_dir);

}  // namespace sio

#endif  // SIO_PIPELINE_HPP
