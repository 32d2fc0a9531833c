#include "stjpda/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <utility>

#include "stjpda/linalg.hpp"

namespace stjpda::pipeline {
namespace {


// One confirmed spatial curve: sparse (index, value, variance) support.
struct Curve {
  std::vector<int> idx;
  std::vector<double> value;
  std::vector<double> variance;
};

}  // namespace

void PipelineConfig::validate() const {
  require(indexPoints.size() >= 2, ErrorCode::InvalidArgument,
          "pipeline needs at least two index points");
  for (Eigen::Index i = 1; i < indexPoints.size(); ++i) {
    require(indexPoints(i) > indexPoints(i - 1), ErrorCode::InvalidArgument,
            "index points must be strictly ascending");
  }
  const double du = indexPoints(1) - indexPoints(0);
  for (Eigen::Index i = 1; i < indexPoints.size(); ++i) {
    const double gap = indexPoints(i) - indexPoints(i - 1);
    require(std::abs(gap - du) <= 1e-9 * du, ErrorCode::InvalidArgument,
            "index grid must be uniform for the spatial sweep");
  }
  spatial.validate();
  temporal.validate();
  assoc.validate();
  require(assoc.nz() == 1, ErrorCode::InvalidArgument,
          "pipeline handles scalar measurements only");
  require(frameDt > 0.0, ErrorCode::InvalidArgument, "frameDt must be positive");
  require(smootherLag >= 0, ErrorCode::InvalidArgument, "smootherLag must be >= 0");
  require(coastBudget >= 0, ErrorCode::InvalidArgument, "coastBudget must be >= 0");
  require(matchGate > 0.0, ErrorCode::InvalidArgument, "matchGate must be positive");
  require(pointGate > 0.0, ErrorCode::InvalidArgument, "pointGate must be positive");
  require(reportMinMatches >= 1, ErrorCode::InvalidArgument,
          "reportMinMatches must be >= 1");
  require(reportWindow >= 0, ErrorCode::InvalidArgument,
          "reportWindow must be >= 0");
  require(cullGate > 0.0, ErrorCode::InvalidArgument, "cullGate must be positive");
  require(cullStreak >= 0, ErrorCode::InvalidArgument, "cullStreak must be >= 0");
}

Tracker::Tracker(PipelineConfig config)
    : cfg_(std::move(config)),
      B_(coupling::CoregionalizationMatrix::identity(1)) {
  cfg_.validate();
  spatialCssm_ = kernels::to_cssm(cfg_.spatial, cfg_.rbfOrder);
  const double du = cfg_.indexPoints(1) - cfg_.indexPoints(0);
  spatialSsm_ = kernels::discretize(spatialCssm_, du);
  temporalSsm_ = kernels::discretize(kernels::to_cssm(cfg_.temporal, cfg_.rbfOrder),
                                     cfg_.frameDt);
  Ku_ = kernels::gram(cfg_.spatial, cfg_.indexPoints, cfg_.indexPoints);
  Ku_.diagonal().array() += 1e-9 * cfg_.spatial.sigma2;
  B_ = cfg_.B.size() == 0 ? coupling::CoregionalizationMatrix::identity(1)
                          : coupling::CoregionalizationMatrix(cfg_.B);
  state_.x = Vector::Zero(0);
  state_.P = Matrix::Zero(0, 0);
}

Matrix Tracker::live_coupling(int liveCount) const {
  int maxSlot = 0;
  for (const auto& t : targets_) maxSlot = std::max(maxSlot, t.slot);
  const Matrix full = B_.leading(maxSlot + 1);
  Matrix live(liveCount, liveCount);
  for (int i = 0; i < liveCount; ++i) {
    for (int j = 0; j < liveCount; ++j) {
      live(i, j) = full(targets_[static_cast<size_t>(i)].slot,
                        targets_[static_cast<size_t>(j)].slot);
    }
  }
  return live;
}

coupling::StackedModel Tracker::model_for(int liveCount) const {
  const coupling::CoregionalizationMatrix Blive(live_coupling(liveCount));
  return coupling::stack_model(liveCount, temporalSsm_, Blive, Ku_, cfg_.indexPoints);
}

void Tracker::step(const std::vector<association::Detection>& detections) {
  require(!finished_, ErrorCode::InvalidArgument, "tracker already finished");
  const int N = cfg_.N();
  const int s = temporalSsm_.order();
  const int blockLen = N * s;
  frameMeasCount_.push_back(static_cast<int>(detections.size()));

  // Predict the persistent joint state forward one frame.
  temporal::Gaussian pred = state_;
  if (!targets_.empty()) {
    const auto model = model_for(static_cast<int>(targets_.size()));
    pred = temporal::predict(state_, model);
    if (!window_.empty()) {
      window_.back().step.xPred = pred.x;
      window_.back().step.PPred = pred.P;
      window_.back().step.F = model.Fbar;
    }
  }

  // Spatial sweep: bin detections to the nearest index point and run the
  // integrated association filter along the grid, warm-started from the
  // temporal predictions so each sweep keeps tight gates and the curve
  // identities carried by the live targets.
  const double u0 = cfg_.indexPoints(0);
  const double du = cfg_.indexPoints(1) - cfg_.indexPoints(0);
  std::vector<std::vector<association::Detection>> sweepSteps(
      static_cast<size_t>(N));
  for (const auto& det : detections) {
    int i = static_cast<int>(std::lround((det.u - u0) / du));
    i = std::clamp(i, 0, N - 1);
    association::Detection local = det;
    local.frame = i;
    sweepSteps[static_cast<size_t>(i)].push_back(local);
  }
  const int sSp = spatialSsm_.order();
  std::vector<association::InitialTrack> warm;
  std::vector<int> warmTarget;  // index into targets_ per warm entry
  for (size_t t = 0; t < targets_.size(); ++t) {
    if (doomed_.count(targets_[t].id) > 0) continue;
    const Eigen::Index row0 = static_cast<Eigen::Index>(t) * blockLen;
    association::InitialTrack w;
    w.x = Vector::Zero(sSp);
    w.x(0) = pred.x(row0);
    if (sSp >= 2 && N >= 2) {
      w.x(1) = (pred.x(row0 + s) - pred.x(row0)) / du;
    }
    const double bdd =
        B_.leading(targets_[t].slot + 1)(targets_[t].slot, targets_[t].slot);
    w.P = bdd * spatialSsm_.P0;
    w.P(0, 0) = std::max(pred.P(row0, row0), 1e-8);
    for (int r = 1; r < sSp; ++r) {
      w.P.row(r).head(r).setZero();
      w.P.col(r).head(r).setZero();
    }
    w.couplingSlot = targets_[t].slot;
    w.existence = 0.98;
    warmTarget.push_back(static_cast<int>(t));
    warm.push_back(std::move(w));
  }
  // The sweep carries only the live targets: discovery of new curves happens
  // afterwards by peeling the unclaimed detections, so internal spawning is
  // off. Spawn-by-unvalidated-measurement cannot see a new curve that runs
  // inside an existing track's validation gate, which coupled curve bundles
  // do routinely.
  association::AssociationConfig sweepCfg = cfg_.assoc;
  sweepCfg.sweepSpawns = false;
  association::SweepResult sweep;
  if (!warm.empty()) {
    sweep = association::run_integrated_jpdaf(sweepSteps, spatialSsm_, B_,
                                              sweepCfg, warm);
  }

  // Sweep tracks become curves carrying their pseudo-measurements. Warm ids
  // are 0..W-1 in seeding order.
  std::map<int, Curve> curveById;
  for (const auto& track : sweep.tracks) curveById.emplace(track.id, Curve{});
  for (const auto& pm : sweep.pseudo.entries) {
    auto it = curveById.find(pm.trackId);
    if (it == curveById.end()) continue;
    it->second.idx.push_back(pm.step);
    it->second.value.push_back(pm.value(0));
    it->second.variance.push_back(
        cfg_.homogeneousNoise ? cfg_.assoc.R(0, 0) : pm.covariance(0, 0));
  }
  std::vector<Curve> curves;
  std::vector<int> curveTrack;  // sweep track id per curve
  for (auto& [id, curve] : curveById) {
    if (curve.idx.empty()) continue;
    curveTrack.push_back(id);
    curves.push_back(std::move(curve));
  }

  // Each warm sweep track carries its target's identity, so its curve maps
  // straight back. The match cost — normalized squared distance averaged
  // over the better half of the curve's points, robust to identity swaps
  // mid-sweep — feeds the reporting-quality log.
  const int nc = static_cast<int>(curves.size());
  const int nt = static_cast<int>(targets_.size());
  std::vector<int> curveOfTarget(static_cast<size_t>(nt), -1);
  std::vector<double> matchCost(static_cast<size_t>(nt), 0.0);
  for (int c = 0; c < nc; ++c) {
    const int tid = curveTrack[static_cast<size_t>(c)];
    if (tid < 0 || tid >= static_cast<int>(warmTarget.size())) continue;
    const int t = warmTarget[static_cast<size_t>(tid)];
    if (doomed_.count(targets_[static_cast<size_t>(t)].id) > 0) continue;
    curveOfTarget[static_cast<size_t>(t)] = c;
    const Curve& curve = curves[static_cast<size_t>(c)];
    std::vector<double> nds(curve.idx.size());
    for (size_t k = 0; k < curve.idx.size(); ++k) {
      const int row = t * blockLen + curve.idx[static_cast<size_t>(k)] * s;
      const double dv = curve.value[k] - pred.x(row);
      const double var = pred.P(row, row) + curve.variance[k];
      nds[k] = dv * dv / var;
    }
    const size_t half = (nds.size() + 1) / 2;
    std::nth_element(nds.begin(), nds.begin() + (half - 1), nds.end());
    matchCost[static_cast<size_t>(t)] =
        std::accumulate(nds.begin(), nds.begin() + half, 0.0) /
        static_cast<double>(half);
  }

  if (std::getenv("STJPDA_DEBUG_MATCH") != nullptr) {
    for (int t = 0; t < nt; ++t) {
      const int c = curveOfTarget[static_cast<size_t>(t)];
      const int sup =
          c >= 0 ? static_cast<int>(curves[static_cast<size_t>(c)].idx.size())
                 : -1;
      double mid = 0.0;
      if (c >= 0 && !curves[static_cast<size_t>(c)].value.empty()) {
        mid = curves[static_cast<size_t>(c)]
                  .value[curves[static_cast<size_t>(c)].value.size() / 2];
      }
      std::fprintf(stderr,
                   "frame %d tgt %d sup=%d cost=%.2f mid=%+.2f predmid=%+.2f\n",
                   frame_, targets_[static_cast<size_t>(t)].id, sup,
                   c >= 0 ? matchCost[static_cast<size_t>(t)] : -1.0, mid,
                   pred.x(t * blockLen + (N / 2) * s));
    }
  }

  // Deaths: coasting targets past their budget.
  std::vector<bool> keep(static_cast<size_t>(nt), true);
  bool membershipChanged = false;
  for (int t = 0; t < nt; ++t) {
    auto& target = targets_[static_cast<size_t>(t)];
    if (doomed_.count(target.id) > 0) {
      keep[static_cast<size_t>(t)] = false;
      membershipChanged = true;
      doomed_.erase(target.id);
      result_.lifecycle.push_back({frame_, target.id, "merged"});
    } else if (curveOfTarget[static_cast<size_t>(t)] >= 0 &&
               static_cast<int>(
                   curves[static_cast<size_t>(
                              curveOfTarget[static_cast<size_t>(t)])]
                       .idx.size()) >= (N + 1) / 2 &&
               matchCost[static_cast<size_t>(t)] <= cfg_.matchGate) {
      // A curve with fewer validated grid points than half the grid is
      // clutter nibble, not a detection of the target: misdetection leaves
      // far more support than this at any plausible Pd. A curve far from
      // the prediction is a neighbour's lane grabbed through a coast-
      // inflated gate; counting either as a match would keep dead tracks
      // on a revalidation treadmill forever.
      target.framesUnmatched = 0;
      ++target.totalMatches;
      matchedFrames_[target.id].push_back(
          {frame_, std::min(matchCost[static_cast<size_t>(t)], 1e3)});
      result_.lifecycle.push_back({frame_, target.id, "matched"});
    } else {
      ++target.framesUnmatched;
      if (target.framesUnmatched > cfg_.coastBudget) {
        keep[static_cast<size_t>(t)] = false;
        membershipChanged = true;
        result_.lifecycle.push_back({frame_, target.id, "terminated"});
      } else {
        result_.lifecycle.push_back({frame_, target.id, "coasting"});
      }
    }
  }

  // Discovery: claim every detection explained by a matched curve (or, for
  // coasting targets, by the prediction itself), then peel the residual with
  // one-track sweeps. Each peeled lane is a spawn candidate unless it merely
  // shadows a live target — statistically indistinguishable from that
  // target's own lane at most of its points.
  const double claimTol = 2.0 * std::sqrt(cfg_.assoc.R(0, 0));
  std::vector<std::vector<char>> claimed(sweepSteps.size());
  for (size_t k = 0; k < sweepSteps.size(); ++k) {
    claimed[k].assign(sweepSteps[k].size(), 0);
    for (size_t j = 0; j < sweepSteps[k].size(); ++j) {
      const double z = sweepSteps[k][j].z(0);
      for (int t = 0; t < nt && !claimed[k][j]; ++t) {
        const int c = curveOfTarget[static_cast<size_t>(t)];
        if (c >= 0) {
          const Curve& curve = curves[static_cast<size_t>(c)];
          for (size_t i = 0; i < curve.idx.size(); ++i) {
            if (curve.idx[i] == static_cast<int>(k) &&
                std::abs(z - curve.value[i]) <= claimTol) {
              claimed[k][j] = 1;
              break;
            }
          }
        } else {
          const int row = t * blockLen + static_cast<int>(k) * s;
          if (std::abs(z - pred.x(row)) <= claimTol) claimed[k][j] = 1;
        }
      }
    }
  }
  const int minSupport = (6 * N + 9) / 10;
  const auto peeled = association::peel_curves(
      sweepSteps, spatialSsm_, cfg_.assoc, claimed, 4, minSupport, claimTol);

  std::vector<int> spawnCandidates;
  for (const auto& lane : peeled) {
    bool shadows = false;
    for (int t = 0; t < nt && !shadows; ++t) {
      size_t close = 0;
      for (size_t i = 0; i < lane.idx.size(); ++i) {
        const int row = t * blockLen + lane.idx[i] * s;
        const double dv = lane.value[i] - pred.x(row);
        const double var = pred.P(row, row) + cfg_.assoc.R(0, 0);
        if (dv * dv / var <= 4.0) ++close;
      }
      shadows = 10 * close >= 7 * lane.idx.size();
    }
    if (shadows) continue;
    Curve curve;
    curve.idx = lane.idx;
    curve.value = lane.value;
    curve.variance.assign(lane.idx.size(), cfg_.assoc.R(0, 0));
    spawnCandidates.push_back(static_cast<int>(curves.size()));
    curves.push_back(std::move(curve));
    curveTrack.push_back(-1);
  }
  std::sort(spawnCandidates.begin(), spawnCandidates.end(),
            [&](int a, int b) {
              return curves[static_cast<size_t>(a)].idx.size() >
                     curves[static_cast<size_t>(b)].idx.size();
            });
  // Only near-identical lanes are duplicates. Correlated bundle curves
  // routinely run within a few noise deviations of each other, so a loose
  // tolerance here rejects genuinely distinct targets at birth.
  const double dedupTol = 1.5 * std::sqrt(cfg_.assoc.R(0, 0));
  std::vector<int> spawnCurves;
  for (int c : spawnCandidates) {
    const Curve& cand = curves[static_cast<size_t>(c)];
    bool duplicate = false;
    for (int a : spawnCurves) {
      const Curve& kept = curves[static_cast<size_t>(a)];
      int shared = 0, close = 0;
      for (size_t i = 0, j = 0; i < cand.idx.size() && j < kept.idx.size();) {
        if (cand.idx[i] < kept.idx[j]) {
          ++i;
        } else if (cand.idx[i] > kept.idx[j]) {
          ++j;
        } else {
          ++shared;
          if (std::abs(cand.value[i] - kept.value[j]) < dedupTol) ++close;
          ++i;
          ++j;
        }
      }
      if (shared >= 3 && close * 10 >= shared * 9) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) spawnCurves.push_back(c);
  }
  if (!spawnCurves.empty()) membershipChanged = true;
  if (std::getenv("STJPDA_DEBUG_SPAWN")) {
    std::fprintf(stderr,
                 "frame %d: curves %d peeled %zu cand %zu spawn %zu\n",
                 frame_, nc, peeled.size(), spawnCandidates.size(),
                 spawnCurves.size());
  }

  if (membershipChanged) {
    flush_window();

    // Shrink: drop dead targets' rows and columns from the prediction.
    std::vector<int> kept;
    for (int t = 0; t < nt; ++t) {
      if (keep[static_cast<size_t>(t)]) kept.push_back(t);
    }
    const int nKept = static_cast<int>(kept.size());
    Vector x = Vector::Zero(static_cast<Eigen::Index>(nKept) * blockLen);
    Matrix P = Matrix::Zero(x.size(), x.size());
    for (int a = 0; a < nKept; ++a) {
      x.segment(a * blockLen, blockLen) =
          pred.x.segment(kept[static_cast<size_t>(a)] * blockLen, blockLen);
      for (int b = 0; b < nKept; ++b) {
        P.block(a * blockLen, b * blockLen, blockLen, blockLen) =
            pred.P.block(kept[static_cast<size_t>(a)] * blockLen,
                         kept[static_cast<size_t>(b)] * blockLen, blockLen,
                         blockLen);
      }
    }
    std::vector<TemporalTarget> survivors;
    std::vector<int> survivorCurves;
    for (int t = 0; t < nt; ++t) {
      if (!keep[static_cast<size_t>(t)]) continue;
      survivors.push_back(targets_[static_cast<size_t>(t)]);
      survivorCurves.push_back(curveOfTarget[static_cast<size_t>(t)]);
    }

    // Grow: append one stationary prior block per spawned curve.
    const Matrix priorBlock = linalg::kron(Ku_, temporalSsm_.P0);
    for (int c : spawnCurves) {
      TemporalTarget target;
      target.id = nextTargetId_++;
      target.slot = nextSlot_++;
      target.totalMatches = 1;
      matchedFrames_[target.id].push_back({frame_, 0.0});
      survivors.push_back(target);
      const double bdd = B_.leading(target.slot + 1)(target.slot, target.slot);
      const Eigen::Index old = x.size();
      x.conservativeResize(old + blockLen);
      x.tail(blockLen).setZero();
      Matrix grown = Matrix::Zero(old + blockLen, old + blockLen);
      grown.topLeftCorner(old, old) = P;
      grown.bottomRightCorner(blockLen, blockLen) = bdd * priorBlock;
      P = std::move(grown);
      survivorCurves.push_back(c);
      result_.lifecycle.push_back({frame_, target.id, "spawned"});
    }
    targets_ = std::move(survivors);
    curveOfTarget = std::move(survivorCurves);
    pred.x = std::move(x);
    pred.P = std::move(P);
  }

  // One joint partial update across every matched pseudo-measurement.
  const int liveCount = static_cast<int>(targets_.size());
  if (liveCount > 0) {
    std::vector<std::pair<Eigen::Index, std::pair<double, double>>> rows;
    for (int t = 0; t < liveCount; ++t) {
      const int c = curveOfTarget[static_cast<size_t>(t)];
      if (c < 0) continue;
      const Curve& curve = curves[static_cast<size_t>(c)];
      const bool gatePoints = targets_[static_cast<size_t>(t)].totalMatches > 1;
      for (size_t k = 0; k < curve.idx.size(); ++k) {
        if (gatePoints) {
          const int row = t * blockLen + curve.idx[k] * s;
          const double dv = curve.value[k] - pred.x(row);
          const double var = pred.P(row, row) + curve.variance[k];
          if (dv * dv / var > cfg_.pointGate) continue;
        }
        rows.push_back({static_cast<Eigen::Index>(t) * N + curve.idx[k],
                        {curve.value[k], curve.variance[k]}});
      }
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (rows.empty()) {
      state_ = pred;
    } else {
      temporal::PartialMeasurement meas;
      meas.rows.resize(rows.size());
      meas.z = Vector::Zero(static_cast<Eigen::Index>(rows.size()));
      meas.rvar = Vector::Zero(static_cast<Eigen::Index>(rows.size()));
      for (size_t k = 0; k < rows.size(); ++k) {
        meas.rows[k] = rows[k].first;
        meas.z(static_cast<Eigen::Index>(k)) = rows[k].second.first;
        meas.rvar(static_cast<Eigen::Index>(k)) = rows[k].second.second;
      }
      const Matrix Hbar =
          linalg::kron(Matrix::Identity(liveCount * N, liveCount * N),
                       temporalSsm_.H);
      state_ = temporal::missing_update(pred, meas, Hbar);
    }

    // Redundancy cull: track pairs whose posterior curves cannot be told
    // apart. The difference variance keeps the cross term, so coupled
    // targets that draw close stay distinguishable while a duplicate
    // hypothesis riding the same curve accumulates a streak and is doomed.
    for (int a = 0; cfg_.cullStreak > 0 && a < liveCount; ++a) {
      for (int b = a + 1; b < liveCount; ++b) {
        const auto& ta = targets_[static_cast<size_t>(a)];
        const auto& tb = targets_[static_cast<size_t>(b)];
        double sum = 0.0;
        for (int i = 0; i < N; ++i) {
          const Eigen::Index ra = (static_cast<Eigen::Index>(a) * N + i) * s;
          const Eigen::Index rb = (static_cast<Eigen::Index>(b) * N + i) * s;
          const double dv = state_.x(ra) - state_.x(rb);
          const double var = std::max(
              state_.P(ra, ra) + state_.P(rb, rb) - 2.0 * state_.P(ra, rb),
              1e-12);
          sum += dv * dv / var;
        }
        const std::pair<int, int> key{std::min(ta.id, tb.id),
                                      std::max(ta.id, tb.id)};
        if (sum / static_cast<double>(N) < cfg_.cullGate) {
          if (++redundantStreak_[key] >= cfg_.cullStreak) {
            const bool dropA = ta.totalMatches < tb.totalMatches ||
                               (ta.totalMatches == tb.totalMatches &&
                                ta.id > tb.id);
            doomed_.insert(dropA ? ta.id : tb.id);
            redundantStreak_.erase(key);
          }
        } else {
          redundantStreak_.erase(key);
        }
      }
    }

    Record rec;
    rec.frame = frame_;
    for (const auto& t : targets_) rec.ids.push_back(t.id);
    rec.step.xFilt = state_.x;
    rec.step.PFilt = state_.P;
    rec.step.xPred = state_.x;  // amended by the next frame's predict
    rec.step.PPred = state_.P;
    rec.step.F = Matrix::Identity(state_.x.size(), state_.x.size());
    window_.push_back(std::move(rec));
    if (static_cast<int>(window_.size()) > cfg_.smootherLag) emit_front();
  } else {
    state_.x = Vector::Zero(0);
    state_.P = Matrix::Zero(0, 0);
  }

  if (cfg_.recordJoint) {
    result_.jointStates.push_back(state_.x);
    result_.jointCovariances.push_back(state_.P);
    std::vector<int> ids;
    for (const auto& t : targets_) ids.push_back(t.id);
    result_.jointTargetIds.push_back(std::move(ids));
  }
  ++frame_;
}

void Tracker::emit_front() {
  smoother::FilterHistory history(static_cast<int>(window_.size()) - 1);
  for (const auto& rec : window_) history.push(rec.step);
  const auto smoothed = smoother::smooth_window(history);
  const Record& rec = window_.front();
  const auto& est = smoothed.front();

  // Stage the smoothed estimate for every live target. Which of them get
  // reported is decided in report_staged() once all frames are processed,
  // so an early window flush never freezes the decision against an
  // incomplete match history.
  StagedFrame staged;
  staged.frame = rec.frame;
  staged.ids = rec.ids;
  const int N = cfg_.N();
  const int s = temporalSsm_.order();
  for (size_t t = 0; t < rec.ids.size(); ++t) {
    Vector vals(N), vars(N);
    for (int i = 0; i < N; ++i) {
      const Eigen::Index row = (static_cast<Eigen::Index>(t) * N + i) * s;
      vals(i) = est.x(row);
      vars(i) = est.P(row, row);
    }
    staged.values.push_back(std::move(vals));
    staged.variances.push_back(std::move(vars));
  }
  staged_.push_back(std::move(staged));
  window_.pop_front();
}

void Tracker::report_staged() {
  const int N = cfg_.N();
  for (StagedFrame& sf : staged_) {
    FrameEstimate out;
    out.frame = sf.frame;

    // Reportable targets near this frame, ranked by how well their matched
    // curves fit (more recent matches first, then lower mean match cost).
    struct Candidate {
      size_t t;
      int recentMatches;
      double meanCost;
    };
    std::vector<Candidate> candidates;
    for (size_t t = 0; t < sf.ids.size(); ++t) {
      const auto log = matchedFrames_.find(sf.ids[t]);
      if (log == matchedFrames_.end() ||
          static_cast<int>(log->second.size()) < cfg_.reportMinMatches) {
        continue;
      }
      int recent = 0;
      double costSum = 0.0;
      for (const auto& [f, c] : log->second) {
        if (std::abs(f - sf.frame) <= cfg_.reportWindow) {
          ++recent;
          costSum += c;
        }
      }
      if (recent == 0) continue;
      candidates.push_back({t, recent, costSum / recent});
    }

    if (cfg_.adaptiveReportCount && !candidates.empty()) {
      std::sort(candidates.begin(), candidates.end(),
                [&](const Candidate& a, const Candidate& b) {
                  if (a.recentMatches != b.recentMatches) {
                    return a.recentMatches > b.recentMatches;
                  }
                  if (a.meanCost != b.meanCost) return a.meanCost < b.meanCost;
                  return sf.ids[a.t] < sf.ids[b.t];
                });

      // Duplicate lanes first: a candidate whose smoothed values shadow a
      // better-ranked lane everywhere is the same physical curve. The
      // tolerance sits well under the measurement noise: twin hypotheses fed
      // identical curves agree to numerical precision, while distinct targets
      // whose estimates compress together still separate by more than this.
      const double laneTol = 0.5 * std::sqrt(cfg_.assoc.R(0, 0));
      std::vector<Candidate> distinct;
      for (const Candidate& cand : candidates) {
        bool shadowed = false;
        for (const Candidate& kept : distinct) {
          double maxGap = 0.0;
          for (int i = 0; i < N; ++i) {
            maxGap = std::max(
                maxGap, std::abs(sf.values[cand.t](i) - sf.values[kept.t](i)));
          }
          if (maxGap < laneTol) {
            shadowed = true;
            if (std::getenv("STJPDA_DEBUG_REPORT")) {
              std::fprintf(stderr, "frame %d: id %d shadowed by id %d gap %.4f\n",
                           sf.frame, sf.ids[cand.t], sf.ids[kept.t], maxGap);
            }
            break;
          }
        }
        if (!shadowed) distinct.push_back(cand);
      }
      candidates = std::move(distinct);

      // Then the measurement-rate budget. The count window is wider than the
      // ranking window so a short Poisson dip in the detection stream does
      // not drop a supported lane.
      const int half = 2 * cfg_.reportWindow + 1;
      double sum = 0.0;
      int count = 0;
      for (int f = sf.frame - half; f <= sf.frame + half; ++f) {
        if (f < 0 || f >= static_cast<int>(frameMeasCount_.size())) continue;
        sum += frameMeasCount_[static_cast<size_t>(f)];
        ++count;
      }
      const double clutterExpected =
          cfg_.assoc.clutterRate * cfg_.assoc.volume * N;
      const double supported =
          (sum / std::max(count, 1) - clutterExpected) / (cfg_.assoc.Pd * N);
      const size_t budget =
          static_cast<size_t>(std::max<long>(0, std::lround(supported)));
      if (std::getenv("STJPDA_DEBUG_REPORT") && candidates.size() > budget) {
        std::fprintf(stderr, "frame %d: budget %zu cuts %zu candidates\n",
                     sf.frame, budget, candidates.size());
      }
      if (candidates.size() > budget) candidates.resize(budget);
      std::sort(candidates.begin(), candidates.end(),
                [](const Candidate& a, const Candidate& b) {
                  return a.t < b.t;
                });
    }

    for (const Candidate& cand : candidates) {
      out.targetIds.push_back(sf.ids[cand.t]);
      out.values.push_back(std::move(sf.values[cand.t]));
      out.variances.push_back(std::move(sf.variances[cand.t]));
    }
    if (static_cast<size_t>(sf.frame) >= result_.frames.size()) {
      result_.frames.resize(static_cast<size_t>(sf.frame) + 1);
      for (size_t f = 0; f < result_.frames.size(); ++f) {
        result_.frames[f].frame = static_cast<int>(f);
      }
    }
    result_.frames[static_cast<size_t>(sf.frame)] = std::move(out);
  }
  staged_.clear();
}

void Tracker::flush_window() {
  while (!window_.empty()) emit_front();
}

PipelineResult Tracker::finish() {
  require(!finished_, ErrorCode::InvalidArgument, "tracker already finished");
  finished_ = true;
  flush_window();
  report_staged();
  if (static_cast<size_t>(frame_) > result_.frames.size()) {
    const size_t old = result_.frames.size();
    result_.frames.resize(static_cast<size_t>(frame_));
    for (size_t f = old; f < result_.frames.size(); ++f) {
      result_.frames[f].frame = static_cast<int>(f);
    }
  }
  return std::move(result_);
}

PipelineResult run(const PipelineConfig& config,
                   const std::vector<std::vector<association::Detection>>& frames) {
  const auto start = std::chrono::steady_clock::now();
  Tracker tracker(config);
  for (const auto& frame : frames) tracker.step(frame);
  PipelineResult result = tracker.finish();
  const auto stop = std::chrono::steady_clock::now();
  result.runtimeSeconds =
      std::chrono::duration<double>(stop - start).count();
  result.framesPerSecond =
      result.runtimeSeconds > 0.0
          ? static_cast<double>(frames.size()) / result.runtimeSeconds
          : 0.0;
  return result;
}

}  // namespace stjpda::pipeline
