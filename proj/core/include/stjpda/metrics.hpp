#pragma once

#include <optional>
#include <vector>

#include "stjpda/types.hpp"

namespace stjpda::metrics {

// Curves on a common index grid for one frame: each lane is a value vector
// over the grid; entries may be NaN where a lane has no estimate.
using LaneSet = std::vector<Vector>;

struct EvalReport {
  double accuracy = 0.0;
  double fpRate = 0.0;
  double fnRate = 0.0;
  std::vector<double> rmsePerTarget;
  double meanNEES = 0.0;       // NaN when no consistency data was available
  double runtimeSeconds = 0.0;
  double framesPerSecond = 0.0;
};

// Point-level accuracy over a sequence of frames: lanes are matched one-to-one
// per frame (optimal assignment maximizing correct points); a predicted point
// is correct iff |prediction - truth| < pointThreshold. Returns
// (correct points) / (requested truth points) over all frames.
double accuracy(const std::vector<LaneSet>& predicted,
                const std::vector<LaneSet>& truth, double pointThreshold);

// Lane-level false positive / false negative rates for one frame. Lanes are
// matched one-to-one by maximizing total per-lane accuracy at pointThreshold;
// a matched pair counts only when its per-lane accuracy reaches
// matchFraction. FP = unmatched predictions / #predictions, FN = unmatched
// truths / #truths; empty denominators give 0.
std::pair<double, double> fp_fn(const LaneSet& predicted, const LaneSet& truth,
                                double matchFraction, double pointThreshold);

// Mean over samples of e' P^{-1} e.
double nees(const std::vector<Vector>& errors, const std::vector<Matrix>& covariances);

// Per-target root-mean-square error between matched predicted and truth
// lanes over a frame sequence (match recomputed per frame; unmatched truth
// points are skipped). Entry d covers truth lane d.
std::vector<double> rmse_per_target(const std::vector<LaneSet>& predicted,
                                    const std::vector<LaneSet>& truth,
                                    double pointThreshold);

}  // namespace stjpda::metrics
