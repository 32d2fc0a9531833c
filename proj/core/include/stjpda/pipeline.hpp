#pragma once

#include <deque>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "stjpda/association.hpp"
#include "stjpda/coupling.hpp"
#include "stjpda/kernels.hpp"
#include "stjpda/smoother.hpp"
#include "stjpda/temporal.hpp"
#include "stjpda/types.hpp"

namespace stjpda::pipeline {

struct PipelineConfig {
  Vector indexPoints;  // uniform ascending grid shared by all stages
  kernels::KernelHyperparams spatial;
  kernels::KernelHyperparams temporal;
  int rbfOrder = 2;
  Matrix B;  // coregionalization rows assigned by spawn order; empty -> identity
  association::AssociationConfig assoc;
  double frameDt = 1.0;
  int smootherLag = 5;
  int coastBudget = 8;     // frames a temporal target survives without a matched curve
  // Curve-to-target matching uses the mean normalized squared distance over
  // the better half of the curve's points (robust to curves whose per-step
  // associations swapped identity mid-sweep), gated by matchGate. Individual
  // points must additionally pass pointGate against the target's prediction
  // to enter the update, so a half-swapped curve contributes only the half
  // that belongs to the target.
  double matchGate = 9.0;
  double pointGate = 9.0;
  // Reporting rule: a target appears in the output for frame f only once it
  // has at least reportMinMatches matched curves overall and was matched
  // within reportWindow frames of f. Filters one-off clutter lanes without
  // terminating the hypothesis that carries them.
  int reportMinMatches = 3;
  int reportWindow = 3;
  // Optional redundancy cull (cullStreak 0 disables it): when two live
  // targets' posterior curves stay within cullGate mean normalized squared
  // distance for cullStreak consecutive frames, the one with fewer matches
  // is dropped. Off by default because warm-started sweeps rarely produce
  // duplicates and coupled targets legitimately pass close together.
  double cullGate = 1.0;
  int cullStreak = 0;
  // Reported-lane budget from measurement rates: with clutter intensity and
  // Pd known, the expected target count supporting m detections per frame is
  // (m - E[clutter]) / (Pd N). When more targets are reportable than the
  // data supports, only the best-matching ones are emitted. Duplicate
  // hypotheses keep tracking internally (lifecycle is unaffected) but stop
  // inflating the reported lane set.
  bool adaptiveReportCount = true;
  bool homogeneousNoise = false;  // use the raw R instead of pseudo covariances
  bool recordJoint = false;       // keep per-frame joint filtered states/covariances

  int N() const { return static_cast<int>(indexPoints.size()); }
  void validate() const;
};

// Smoothed per-frame output: one value/variance lane per live target.
struct FrameEstimate {
  int frame = 0;
  std::vector<int> targetIds;
  std::vector<Vector> values;     // per target, N entries
  std::vector<Vector> variances;  // per target, N entries
};

struct LifecycleEvent {
  int frame = 0;
  int targetId = -1;
  std::string event;  // spawned | matched | coasting | terminated | merged
};

struct PipelineResult {
  std::vector<FrameEstimate> frames;  // ascending frame order, every frame present
  std::vector<LifecycleEvent> lifecycle;
  // Filled when recordJoint: the filtered joint state after each frame's
  // update, with the target ids owning each block.
  std::vector<Vector> jointStates;
  std::vector<Matrix> jointCovariances;
  std::vector<std::vector<int>> jointTargetIds;
  double runtimeSeconds = 0.0;
  double framesPerSecond = 0.0;
};

// Full tracking pipeline over one frame sequence: per frame, the spatial
// association sweep condenses detections into confirmed curves with
// pseudo-measurements; curves are matched one-to-one to persistent temporal
// targets; the coupled temporal filter absorbs the pseudo-measurements; a
// fixed-lag smoother produces the reported curves.
class Tracker {
 public:
  explicit Tracker(PipelineConfig config);

  // Processes one frame of detections (frame indices must be consecutive
  // starting at 0).
  void step(const std::vector<association::Detection>& detections);

  // Flushes the smoother and returns everything produced so far.
  PipelineResult finish();

 private:
  struct TemporalTarget {
    int id = -1;
    int slot = 0;
    int framesUnmatched = 0;
    int totalMatches = 0;
  };

  struct Record {
    int frame = 0;
    std::vector<int> ids;
    smoother::FilterStep step;
  };

  // Smoothed per-frame estimates for every live target, before the
  // reporting filter. Reporting runs in finish() once the full match
  // history is known, so early window flushes cannot freeze the decision.
  struct StagedFrame {
    int frame = 0;
    std::vector<int> ids;
    std::vector<Vector> values;
    std::vector<Vector> variances;
  };

  coupling::StackedModel model_for(int liveCount) const;
  Matrix live_coupling(int liveCount) const;
  void flush_window();
  void emit_front();
  void report_staged();

  PipelineConfig cfg_;
  kernels::ContinuousStateSpace spatialCssm_;
  kernels::DiscreteStateSpace spatialSsm_;
  kernels::DiscreteStateSpace temporalSsm_;
  Matrix Ku_;  // jittered spatial Gram over the index grid
  coupling::CoregionalizationMatrix B_;

  std::vector<TemporalTarget> targets_;
  temporal::Gaussian state_;  // posterior over live targets
  int frame_ = 0;
  int nextTargetId_ = 0;
  int nextSlot_ = 0;

  std::deque<Record> window_;
  // Per target id: (frame, match cost) for every matched curve. Survives the
  // target's death so already-recorded frames keep their reporting decision.
  std::map<int, std::vector<std::pair<int, double>>> matchedFrames_;
  std::vector<int> frameMeasCount_;  // detections per processed frame
  std::map<std::pair<int, int>, int> redundantStreak_;  // by target id pair
  std::set<int> doomed_;  // redundant targets removed at the next step
  std::vector<StagedFrame> staged_;  // smoothed frames awaiting reporting
  PipelineResult result_;
  bool finished_ = false;
};

PipelineResult run(const PipelineConfig& config,
                   const std::vector<std::vector<association::Detection>>& frames);

}  // namespace stjpda::pipeline
