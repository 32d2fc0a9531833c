#include "stjpda/association.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "stjpda/linalg.hpp"

namespace stjpda::association {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Squared Mahalanobis distance of z against the d-th n_z sub-block of
// (zbarHat, Sbar). Throws when the sub-block is not positive definite.
double gate_distance(const Vector& zbarHat, const Matrix& Sbar, const Vector& z,
                     int d, int nz) {
  const Matrix Sd = Sbar.block(d * nz, d * nz, nz, nz);
  Eigen::LLT<Matrix> llt(Sd);
  require(llt.info() == Eigen::Success, ErrorCode::Numerical,
          "gating found a non-positive-definite innovation sub-block");
  const Vector diff = z - zbarHat.segment(d * nz, nz);
  return llt.matrixL().solve(diff).squaredNorm();
}

}  // namespace

void Detection::validate() const {
  require(std::isfinite(u) && z.size() >= 1 && z.allFinite(),
          ErrorCode::InvalidArgument, "detection values must be finite");
}

int JointAssociationEvent::measurementFor(int target) const {
  for (std::size_t j = 0; j < assignment.size(); ++j) {
    if (assignment[j] == target + 1) return static_cast<int>(j);
  }
  return -1;
}

void AssociationConfig::validate() const {
  require(std::isfinite(gateThreshold) && gateThreshold > 0.0,
          ErrorCode::InvalidArgument, "gate threshold must be positive");
  require(Pd > 0.0 && Pd <= 1.0, ErrorCode::InvalidArgument,
          "detection probability must lie in (0, 1]");
  require(std::isfinite(clutterRate) && clutterRate >= 0.0,
          ErrorCode::InvalidArgument, "clutter rate must be non-negative");
  require(std::isfinite(volume) && volume > 0.0, ErrorCode::InvalidArgument,
          "surveillance volume must be positive");
  require(R.rows() >= 1 && R.rows() == R.cols(), ErrorCode::InvalidArgument,
          "measurement covariance must be square and non-empty");
  require((R - R.transpose()).cwiseAbs().maxCoeff() <=
              1e-10 * std::max(1.0, R.cwiseAbs().maxCoeff()),
          ErrorCode::InvalidArgument, "measurement covariance must be symmetric");
  require(linalg::min_eigenvalue(R) > 0.0, ErrorCode::InvalidArgument,
          "measurement covariance must be positive definite");
  require(initDistance > 0.0, ErrorCode::InvalidArgument,
          "spawn suppression distance must be positive");
  require(terminateThreshold >= 0.0 && confirmThreshold <= 1.0 &&
              terminateThreshold < confirmThreshold,
          ErrorCode::InvalidArgument,
          "existence thresholds must satisfy 0 <= terminate < confirm <= 1");
  require(survivalFactor > 0.0 && survivalFactor <= 1.0, ErrorCode::InvalidArgument,
          "survival factor must lie in (0, 1]");
  require(initExistence > terminateThreshold && initExistence <= 1.0,
          ErrorCode::InvalidArgument,
          "initial existence must exceed the termination threshold");
  require(maxEvents >= 1, ErrorCode::InvalidArgument, "event cap must be positive");
}

ValidationMatrix gate(const Vector& zbarHat, const Matrix& Sbar,
                      const std::vector<Detection>& detections, double gamma, int nz) {
  require(nz >= 1 && zbarHat.size() % nz == 0, ErrorCode::InvalidArgument,
          "stacked measurement size must be a multiple of n_z");
  require(Sbar.rows() == zbarHat.size() && Sbar.cols() == zbarHat.size(),
          ErrorCode::InvalidArgument, "innovation covariance size mismatch");
  require(gamma > 0.0, ErrorCode::InvalidArgument, "gate threshold must be positive");

  const int D = static_cast<int>(zbarHat.size()) / nz;
  ValidationMatrix V(static_cast<Eigen::Index>(detections.size()), D);
  for (std::size_t j = 0; j < detections.size(); ++j) {
    detections[j].validate();
    require(detections[j].z.size() == nz, ErrorCode::InvalidArgument,
            "detection dimension must equal n_z");
    for (int d = 0; d < D; ++d) {
      V(static_cast<Eigen::Index>(j), d) =
          gate_distance(zbarHat, Sbar, detections[j].z, d, nz) < gamma;
    }
  }
  return V;
}

std::vector<JointAssociationEvent> enumerate_events(const ValidationMatrix& validation,
                                                    std::size_t cap) {
  const int m = static_cast<int>(validation.rows());
  const int D = static_cast<int>(validation.cols());
  require(D <= 63, ErrorCode::InvalidArgument,
          "event enumeration supports at most 63 targets");

  std::vector<JointAssociationEvent> events;
  std::vector<int> assignment(static_cast<std::size_t>(m), 0);

  // Depth-first over measurements; clutter branch first, then targets in
  // ascending order, so the all-clutter event is always events[0].
  auto recurse = [&](auto&& self, int j, std::uint64_t usedTargets) -> void {
    if (j == m) {
      JointAssociationEvent e;
      e.assignment = assignment;
      e.delta.assign(static_cast<std::size_t>(D), 0);
      for (int t : assignment) {
        if (t > 0) e.delta[static_cast<std::size_t>(t - 1)] = 1;
      }
      e.phi = m - static_cast<int>(std::count_if(assignment.begin(), assignment.end(),
                                                 [](int t) { return t > 0; }));
      require(events.size() < cap, ErrorCode::Combinatorial,
              "joint association event count exceeded the configured cap");
      events.push_back(std::move(e));
      return;
    }
    assignment[static_cast<std::size_t>(j)] = 0;
    self(self, j + 1, usedTargets);
    for (int d = 0; d < D; ++d) {
      if (!validation(j, d)) continue;
      if (usedTargets & (std::uint64_t{1} << d)) continue;
      assignment[static_cast<std::size_t>(j)] = d + 1;
      self(self, j + 1, usedTargets | (std::uint64_t{1} << d));
    }
    assignment[static_cast<std::size_t>(j)] = 0;
  };
  recurse(recurse, 0, 0);
  return events;
}

double log_event_prior(const JointAssociationEvent& event, int m,
                       const AssociationConfig& cfg) {
  require(static_cast<int>(event.assignment.size()) == m, ErrorCode::InvalidArgument,
          "event assignment length must equal the measurement count");

  const double mean = cfg.clutterRate * cfg.volume;  // Poisson clutter mean
  const int phi = event.phi;

  // log[(phi!/m!) Poisson(mean)(phi)]; the phi! cancels the Poisson's 1/phi!.
  double lp = -std::lgamma(static_cast<double>(m) + 1.0) - mean;
  if (phi > 0) {
    if (mean <= 0.0) return kNegInf;
    lp += phi * std::log(mean);
  }
  for (std::uint8_t det : event.delta) {
    if (det) {
      lp += std::log(cfg.Pd);
    } else {
      if (cfg.Pd >= 1.0) return kNegInf;
      lp += std::log1p(-cfg.Pd);
    }
  }
  return lp;
}

double event_prior(const JointAssociationEvent& event, int m,
                   const AssociationConfig& cfg) {
  return std::exp(log_event_prior(event, m, cfg));
}

double log_event_likelihood(const JointAssociationEvent& event, const Vector& zbarHat,
                            const Matrix& Sbar, const std::vector<Detection>& detections,
                            double volume, int nz) {
  require(volume > 0.0, ErrorCode::InvalidArgument, "surveillance volume must be positive");
  require(event.assignment.size() == detections.size(), ErrorCode::InvalidArgument,
          "event assignment length must equal the measurement count");

  double ll = -event.phi * std::log(volume);

  // Collect detected targets in ascending order and their assigned
  // measurements, then evaluate one joint Gaussian on that sub-block.
  std::vector<int> targets;
  for (std::size_t d = 0; d < event.delta.size(); ++d) {
    if (event.delta[d]) targets.push_back(static_cast<int>(d));
  }
  if (targets.empty()) return ll;

  const Eigen::Index k = static_cast<Eigen::Index>(targets.size()) * nz;
  Vector z(k), mean(k);
  Matrix S(k, k);
  for (std::size_t a = 0; a < targets.size(); ++a) {
    const int da = targets[a];
    const int j = event.measurementFor(da);
    require(j >= 0, ErrorCode::InvalidArgument, "detected target lacks a measurement");
    z.segment(static_cast<Eigen::Index>(a) * nz, nz) =
        detections[static_cast<std::size_t>(j)].z;
    mean.segment(static_cast<Eigen::Index>(a) * nz, nz) = zbarHat.segment(da * nz, nz);
    for (std::size_t b = 0; b < targets.size(); ++b) {
      S.block(static_cast<Eigen::Index>(a) * nz, static_cast<Eigen::Index>(b) * nz, nz,
              nz) = Sbar.block(targets[a] * nz, targets[b] * nz, nz, nz);
    }
  }
  return ll + linalg::log_mvn_pdf(z, mean, S);
}

double event_likelihood(const JointAssociationEvent& event, const Vector& zbarHat,
                        const Matrix& Sbar, const std::vector<Detection>& detections,
                        double volume, int nz) {
  return std::exp(log_event_likelihood(event, zbarHat, Sbar, detections, volume, nz));
}

void event_posteriors(std::vector<JointAssociationEvent>& events,
                      const std::vector<double>& logPriors,
                      const std::vector<double>& logLikelihoods) {
  require(!events.empty(), ErrorCode::InvalidArgument, "event set must be non-empty");
  require(logPriors.size() == events.size() && logLikelihoods.size() == events.size(),
          ErrorCode::InvalidArgument, "event weights must align with the event set");

  std::vector<double> logw(events.size(), kNegInf);
  double top = kNegInf;
  for (std::size_t i = 0; i < events.size(); ++i) {
    logw[i] = logPriors[i] + logLikelihoods[i];
    top = std::max(top, logw[i]);
  }
  require(std::isfinite(top), ErrorCode::Numerical,
          "no association event has positive probability");

  double norm = 0.0;
  for (double& w : logw) {
    w = std::exp(w - top);
    norm += w;
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    events[i].posterior = logw[i] / norm;
  }
}

CoupledUpdateResult coupled_update(const Vector& xbar, const Matrix& Pbar,
                                   const std::vector<JointAssociationEvent>& events,
                                   const Vector& zbarHat, const Matrix& Sbar,
                                   const Matrix& Hbar,
                                   const std::vector<Detection>& detections, int nz) {
  const Eigen::Index n = xbar.size();
  const Eigen::Index dz = zbarHat.size();
  require(Pbar.rows() == n && Pbar.cols() == n && Sbar.rows() == dz &&
              Sbar.cols() == dz && Hbar.rows() == dz && Hbar.cols() == n,
          ErrorCode::InvalidArgument, "coupled update dimension mismatch");
  require(!events.empty(), ErrorCode::InvalidArgument, "event set must be non-empty");

  double total = 0.0;
  for (const auto& e : events) total += e.posterior;
  require(std::abs(total - 1.0) <= 1e-9, ErrorCode::InvalidArgument,
          "event posteriors must be normalized before the coupled update");

  Eigen::LDLT<Matrix> ldlt(Sbar);
  require(ldlt.info() == Eigen::Success, ErrorCode::Numerical,
          "stacked innovation covariance is not factorizable");

  CoupledUpdateResult out;
  out.gain = ldlt.solve(Hbar * Pbar).transpose();  // Pbar Hbar' Sbar^{-1}

  Vector vbar = Vector::Zero(dz);
  Matrix second = Matrix::Zero(dz, dz);
  double beta0 = 0.0;
  for (const auto& e : events) {
    Vector vA = Vector::Zero(dz);
    bool anyDetected = false;
    for (std::size_t d = 0; d < e.delta.size(); ++d) {
      if (!e.delta[d]) continue;
      anyDetected = true;
      const int j = e.measurementFor(static_cast<int>(d));
      require(j >= 0 && j < static_cast<int>(detections.size()),
              ErrorCode::InvalidArgument, "event references a missing measurement");
      vA.segment(static_cast<Eigen::Index>(d) * nz, nz) =
          detections[static_cast<std::size_t>(j)].z -
          zbarHat.segment(static_cast<Eigen::Index>(d) * nz, nz);
    }
    if (!anyDetected) beta0 += e.posterior;
    vbar += e.posterior * vA;
    second += e.posterior * (vA * vA.transpose());
  }

  out.combinedInnovation = vbar;
  out.innovationSpread = second - vbar * vbar.transpose();
  linalg::symmetrize(out.innovationSpread);
  out.beta0 = beta0;

  out.x = xbar + out.gain * vbar;
  Matrix Pc = Pbar - out.gain * Sbar * out.gain.transpose();
  Matrix spreadTerm = out.gain * out.innovationSpread * out.gain.transpose();
  out.P = beta0 * Pbar + (1.0 - beta0) * Pc + spreadTerm;
  linalg::symmetrize(out.P);

  require(linalg::min_eigenvalue(out.P) >= -1e-9 * std::max(1.0, out.P.trace()),
          ErrorCode::Numerical, "coupled update produced an indefinite covariance");
  return out;
}

namespace {

// Mutable sweep state for run_integrated_jpdaf.
struct LiveSet {
  std::vector<std::size_t> trackIdx;  // indices into the result track vector
  Vector x;                           // stacked live state
  Matrix P;

  int size() const { return static_cast<int>(trackIdx.size()); }
};

Matrix live_coupling(const LiveSet& live, const std::vector<Track>& tracks,
                     const coupling::CoregionalizationMatrix& B, int maxSlot) {
  const Matrix Bext = B.leading(maxSlot + 1);
  Matrix out(live.size(), live.size());
  for (int i = 0; i < live.size(); ++i) {
    for (int j = 0; j < live.size(); ++j) {
      out(i, j) = Bext(tracks[live.trackIdx[static_cast<std::size_t>(i)]].couplingSlot,
                       tracks[live.trackIdx[static_cast<std::size_t>(j)]].couplingSlot);
    }
  }
  return out;
}

void snapshot_tracks(const LiveSet& live, std::vector<Track>& tracks, int s) {
  for (int i = 0; i < live.size(); ++i) {
    Track& t = tracks[live.trackIdx[static_cast<std::size_t>(i)]];
    t.xbar = live.x.segment(i * s, s);
    t.Pbar = live.P.block(i * s, i * s, s, s);
  }
}

}  // namespace

SweepResult run_integrated_jpdaf(const std::vector<std::vector<Detection>>& steps,
                                 const kernels::DiscreteStateSpace& ssm,
                                 const coupling::CoregionalizationMatrix& B,
                                 const AssociationConfig& cfg) {
  return run_integrated_jpdaf(steps, ssm, B, cfg, {});
}

SweepResult run_integrated_jpdaf(const std::vector<std::vector<Detection>>& steps,
                                 const kernels::DiscreteStateSpace& ssm,
                                 const coupling::CoregionalizationMatrix& B,
                                 const AssociationConfig& cfg,
                                 const std::vector<InitialTrack>& initialTracks) {
  cfg.validate();
  const int s = ssm.order();
  const int nz = cfg.nz();
  require(ssm.H.size() == s, ErrorCode::InvalidArgument,
          "spatial model emission size must match its order");
  require(nz == 1, ErrorCode::InvalidArgument,
          "the spatial sweep uses scalar per-point measurements");

  SweepResult result;
  LiveSet live;
  live.x = Vector();
  live.P = Matrix();
  int nextSlot = 0;
  int nextId = 0;
  int maxSlot = 0;

  if (!initialTracks.empty()) {
    const Eigen::Index dim = static_cast<Eigen::Index>(initialTracks.size()) * s;
    live.x = Vector::Zero(dim);
    live.P = Matrix::Zero(dim, dim);
    for (std::size_t i = 0; i < initialTracks.size(); ++i) {
      const InitialTrack& init = initialTracks[i];
      require(init.x.size() == s && init.P.rows() == s && init.P.cols() == s,
              ErrorCode::InvalidArgument,
              "initial track state must match the spatial model order");
      require(init.couplingSlot >= 0, ErrorCode::InvalidArgument,
              "initial track coupling slot must be non-negative");
      Track t;
      t.id = nextId++;
      t.existenceProb = std::clamp(init.existence, 0.0, 1.0);
      t.status = t.existenceProb >= cfg.confirmThreshold
                     ? TrackStatus::Confirmed
                     : TrackStatus::Tentative;
      t.spawnStep = 0;
      t.couplingSlot = init.couplingSlot;
      maxSlot = std::max(maxSlot, t.couplingSlot);
      nextSlot = std::max(nextSlot, t.couplingSlot + 1);
      t.xbar = init.x;
      t.Pbar = init.P;
      live.x.segment(static_cast<Eigen::Index>(i) * s, s) = init.x;
      live.P.block(static_cast<Eigen::Index>(i) * s,
                   static_cast<Eigen::Index>(i) * s, s, s) = init.P;
      result.tracks.push_back(std::move(t));
      live.trackIdx.push_back(result.tracks.size() - 1);
    }
  }

  for (std::size_t stepIdx = 0; stepIdx < steps.size(); ++stepIdx) {
    const int k = static_cast<int>(stepIdx);
    const std::vector<Detection>& dets = steps[stepIdx];
    const int m = static_cast<int>(dets.size());

    // Prediction along the index axis for every live track, with coupled
    // process noise B_live (x) Q.
    if (live.size() > 0 && k > 0) {
      const Matrix Blive = live_coupling(live, result.tracks, B, maxSlot);
      const Matrix Fbig = linalg::kron(Matrix::Identity(live.size(), live.size()), ssm.F);
      const Matrix Qbig = linalg::kron(Blive, ssm.Q);
      live.x = Fbig * live.x;
      live.P = Fbig * live.P * Fbig.transpose() + Qbig;
      linalg::symmetrize(live.P);
    }

    std::vector<char> validated(static_cast<std::size_t>(m), 0);
    std::vector<double> minDistance(static_cast<std::size_t>(m),
                                    std::numeric_limits<double>::infinity());

    if (live.size() > 0) {
      const int D = live.size();
      const Matrix Hbar =
          linalg::kron(Matrix::Identity(D, D), Matrix(ssm.H));
      const Vector zbarHat = Hbar * live.x;
      Matrix Sbar = Hbar * live.P * Hbar.transpose() +
                    linalg::kron(Matrix::Identity(D, D), cfg.R);
      linalg::symmetrize(Sbar);

      ValidationMatrix V = gate(zbarHat, Sbar, dets, cfg.gateThreshold, nz);
      for (int j = 0; j < m; ++j) {
        for (int d = 0; d < D; ++d) {
          if (V(j, d)) validated[static_cast<std::size_t>(j)] = 1;
          minDistance[static_cast<std::size_t>(j)] =
              std::min(minDistance[static_cast<std::size_t>(j)],
                       gate_distance(zbarHat, Sbar, dets[static_cast<std::size_t>(j)].z,
                                     d, nz));
        }
      }
      if (std::getenv("STJPDA_DEBUG_SWEEP_STEP")) {
        std::fprintf(stderr, "step %d m=%d:", k, m);
        for (int d = 0; d < D; ++d) {
          std::fprintf(stderr, " trk%d(z %.2f S %.3f)",
                       result.tracks[live.trackIdx[static_cast<std::size_t>(d)]].id,
                       zbarHat(d * nz), Sbar(d * nz, d * nz));
        }
        for (int j = 0; j < m; ++j) {
          std::fprintf(stderr, " z%d=%.2f d%.1f%s", j,
                       dets[static_cast<std::size_t>(j)].z(0),
                       minDistance[static_cast<std::size_t>(j)],
                       validated[static_cast<std::size_t>(j)] ? "V" : "");
        }
        std::fprintf(stderr, "\n");
      }

      std::vector<JointAssociationEvent> events = enumerate_events(V, cfg.maxEvents);
      std::vector<double> logPriors(events.size()), logLiks(events.size());
      for (std::size_t i = 0; i < events.size(); ++i) {
        logPriors[i] = log_event_prior(events[i], m, cfg);
        logLiks[i] = log_event_likelihood(events[i], zbarHat, Sbar, dets, cfg.volume, nz);
      }
      event_posteriors(events, logPriors, logLiks);

      const CoupledUpdateResult upd =
          coupled_update(live.x, live.P, events, zbarHat, Sbar, Hbar, dets, nz);
      live.x = upd.x;
      live.P = upd.P;

      // Existence bookkeeping, association history, pseudo-measurements.
      std::vector<double> assocMass(static_cast<std::size_t>(D), 0.0);
      for (const auto& e : events) {
        for (int d = 0; d < D; ++d) {
          if (e.delta[static_cast<std::size_t>(d)]) {
            assocMass[static_cast<std::size_t>(d)] += e.posterior;
          }
        }
      }

      std::vector<std::size_t> survivors;
      for (int d = 0; d < D; ++d) {
        Track& t = result.tracks[live.trackIdx[static_cast<std::size_t>(d)]];
        std::vector<int> mine;
        for (int j = 0; j < m; ++j) {
          if (V(j, d)) mine.push_back(j);
        }
        t.assocHistory.emplace_back(k, mine);

        double p = cfg.survivalFactor * t.existenceProb;
        if (!mine.empty()) {
          const double w = assocMass[static_cast<std::size_t>(d)];
          p = p + (1.0 - p) * w;
          t.consecutiveMisses = 0;

          PseudoMeasurement pm;
          pm.trackId = t.id;
          pm.step = k;
          pm.value = zbarHat.segment(d * nz, nz) + upd.combinedInnovation.segment(d * nz, nz);
          pm.covariance = Sbar.block(d * nz, d * nz, nz, nz) +
                          upd.innovationSpread.block(d * nz, d * nz, nz, nz);
          linalg::symmetrize(pm.covariance);
          pm.likelihood = 1.0 - upd.beta0;
          result.pseudo.entries.push_back(std::move(pm));
        } else {
          // Missed-detection existence decay: Bayes update against the
          // event "no validated measurement" with detection probability Pd.
          p = p * (1.0 - cfg.Pd) / (1.0 - cfg.Pd * p);
          t.consecutiveMisses += 1;
        }
        t.existenceProb = std::clamp(p, 0.0, 1.0);

        if (t.status == TrackStatus::Tentative &&
            t.existenceProb >= cfg.confirmThreshold) {
          t.status = TrackStatus::Confirmed;
        }
        if (t.existenceProb < cfg.terminateThreshold) {
          t.status = TrackStatus::Terminated;
        } else {
          survivors.push_back(static_cast<std::size_t>(d));
        }
      }

      snapshot_tracks(live, result.tracks, s);

      if (survivors.size() != live.trackIdx.size()) {
        LiveSet next;
        next.x = Vector(static_cast<Eigen::Index>(survivors.size()) * s);
        next.P = Matrix(static_cast<Eigen::Index>(survivors.size()) * s,
                        static_cast<Eigen::Index>(survivors.size()) * s);
        for (std::size_t a = 0; a < survivors.size(); ++a) {
          next.trackIdx.push_back(live.trackIdx[survivors[a]]);
          next.x.segment(static_cast<Eigen::Index>(a) * s, s) =
              live.x.segment(static_cast<Eigen::Index>(survivors[a]) * s, s);
          for (std::size_t b = 0; b < survivors.size(); ++b) {
            next.P.block(static_cast<Eigen::Index>(a) * s,
                         static_cast<Eigen::Index>(b) * s, s, s) =
                live.P.block(static_cast<Eigen::Index>(survivors[a]) * s,
                             static_cast<Eigen::Index>(survivors[b]) * s, s, s);
          }
        }
        live = std::move(next);
      }
    }

    // Spawn tentative tracks from measurements that validate nothing and sit
    // outside every live track's suppression radius.
    for (int j = 0; cfg.sweepSpawns && j < m; ++j) {
      if (validated[static_cast<std::size_t>(j)]) continue;
      if (minDistance[static_cast<std::size_t>(j)] < cfg.initDistance) continue;
      dets[static_cast<std::size_t>(j)].validate();
      require(dets[static_cast<std::size_t>(j)].z.size() == nz,
              ErrorCode::InvalidArgument, "detection dimension must equal n_z");

      Track t;
      t.id = nextId++;
      t.status = TrackStatus::Tentative;
      t.existenceProb = cfg.initExistence;
      t.consecutiveMisses = 0;
      t.spawnStep = k;
      t.couplingSlot = nextSlot++;
      maxSlot = std::max(maxSlot, t.couplingSlot);

      const Matrix Bext = B.leading(maxSlot + 1);
      Vector x0 = Vector::Zero(s);
      x0(0) = dets[static_cast<std::size_t>(j)].z(0);
      Matrix P0 = Bext(t.couplingSlot, t.couplingSlot) * ssm.P0;
      // The seeding measurement enters the birth step's update: the mean is
      // already the measurement (zero innovation), so only the covariance
      // conditions. Without this, a track re-enters the next step with the
      // full stationary position uncertainty and cross-associates with its
      // neighbors' measurements, which permanently merges fresh tracks.
      {
        const Matrix H(ssm.H);
        const Matrix S0 = H * P0 * H.transpose() + cfg.R;
        const Matrix K = P0 * H.transpose() * S0.inverse();
        P0 -= K * S0 * K.transpose();
        linalg::symmetrize(P0);
      }

      const Eigen::Index oldDim = live.x.size();
      Vector nx(oldDim + s);
      nx.head(oldDim) = live.x;
      nx.tail(s) = x0;
      Matrix nP = Matrix::Zero(oldDim + s, oldDim + s);
      nP.topLeftCorner(oldDim, oldDim) = live.P;
      nP.bottomRightCorner(s, s) = P0;
      live.x = std::move(nx);
      live.P = std::move(nP);

      t.xbar = x0;
      t.Pbar = P0;
      result.tracks.push_back(std::move(t));
      live.trackIdx.push_back(result.tracks.size() - 1);
    }
  }

  if (std::getenv("STJPDA_DEBUG_SWEEP")) {
    std::fprintf(stderr, "sweep end:");
    for (const auto& t : result.tracks) {
      int np = 0;
      for (const auto& pm : result.pseudo.entries) {
        if (pm.trackId == t.id) ++np;
      }
      std::fprintf(stderr, " [id %d slot %d %s ex %.2f spawn@%d pts %d]", t.id,
                   t.couplingSlot,
                   t.status == TrackStatus::Confirmed    ? "C"
                   : t.status == TrackStatus::Tentative  ? "T"
                                                         : "X",
                   t.existenceProb, t.spawnStep, np);
    }
    std::fprintf(stderr, "\n");
  }

  return result;
}

std::vector<PeeledCurve> peel_curves(const std::vector<std::vector<Detection>>& steps,
                                     const kernels::DiscreteStateSpace& ssm,
                                     const AssociationConfig& cfg,
                                     std::vector<std::vector<char>> claimed,
                                     int maxCurves, int minSupport,
                                     double claimTol) {
  cfg.validate();
  require(maxCurves >= 0 && minSupport >= 1 && claimTol > 0.0,
          ErrorCode::InvalidArgument, "invalid peel parameters");
  require(cfg.nz() == 1, ErrorCode::InvalidArgument,
          "curve peeling uses scalar per-point measurements");
  const int S = static_cast<int>(steps.size());
  if (claimed.empty()) claimed.resize(static_cast<std::size_t>(S));
  require(static_cast<int>(claimed.size()) == S, ErrorCode::InvalidArgument,
          "claimed mask must have one entry per step");
  for (int k = 0; k < S; ++k) {
    claimed[static_cast<std::size_t>(k)].resize(steps[static_cast<std::size_t>(k)].size(), 0);
  }

  // A one-track sweep that never terminates: existence dynamics are moot for
  // a single probe lane, and holes from missed detections must not cut it.
  AssociationConfig peelCfg = cfg;
  peelCfg.sweepSpawns = false;
  peelCfg.survivalFactor = 1.0;
  peelCfg.terminateThreshold = 0.0;
  // A tight gate keeps the probe from blending two parallel lanes into one.
  peelCfg.gateThreshold = std::min(peelCfg.gateThreshold, 5.0);
  const coupling::CoregionalizationMatrix Bone(Matrix::Identity(1, 1));
  const int s = ssm.order();

  std::vector<std::vector<char>> tried = claimed;
  std::vector<PeeledCurve> out;
  while (static_cast<int>(out.size()) < maxCurves) {
    // Earliest untried unclaimed seed that leaves enough steps for support.
    int sk = -1, sj = -1;
    for (int k = 0; k + minSupport <= S && sk < 0; ++k) {
      const auto& dets = steps[static_cast<std::size_t>(k)];
      for (int j = 0; j < static_cast<int>(dets.size()); ++j) {
        if (!claimed[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] &&
            !tried[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]) {
          sk = k;
          sj = j;
          break;
        }
      }
    }
    if (sk < 0) break;
    tried[static_cast<std::size_t>(sk)][static_cast<std::size_t>(sj)] = 1;

    std::vector<std::vector<Detection>> sub;
    sub.reserve(static_cast<std::size_t>(S - sk));
    for (int k = sk; k < S; ++k) {
      std::vector<Detection> keep;
      for (std::size_t j = 0; j < steps[static_cast<std::size_t>(k)].size(); ++j) {
        if (!claimed[static_cast<std::size_t>(k)][j]) {
          keep.push_back(steps[static_cast<std::size_t>(k)][j]);
        }
      }
      sub.push_back(std::move(keep));
    }

    InitialTrack probe;
    probe.x = Vector::Zero(s);
    probe.x(0) = steps[static_cast<std::size_t>(sk)][static_cast<std::size_t>(sj)].z(0);
    probe.P = ssm.P0;
    {
      const Matrix H(ssm.H);
      const Matrix S0 = H * probe.P * H.transpose() + cfg.R;
      const Matrix K = probe.P * H.transpose() * S0.inverse();
      probe.P -= K * S0 * K.transpose();
      linalg::symmetrize(probe.P);
    }
    probe.couplingSlot = 0;
    probe.existence = 1.0;

    const SweepResult res = run_integrated_jpdaf(sub, ssm, Bone, peelCfg, {probe});
    PeeledCurve curve;
    for (const auto& pm : res.pseudo.entries) {
      if (pm.trackId != 0) continue;
      curve.idx.push_back(pm.step + sk);
      curve.value.push_back(pm.value(0));
    }
    if (std::getenv("STJPDA_DEBUG_PEEL") != nullptr) {
      std::fprintf(stderr, "  peel seed k=%d z=%+.3f support=%zu:", sk,
                   steps[static_cast<std::size_t>(sk)][static_cast<std::size_t>(sj)].z(0),
                   curve.idx.size());
      for (std::size_t i = 0; i < curve.idx.size(); ++i) {
        std::fprintf(stderr, " %d:%+.2f", curve.idx[i], curve.value[i]);
      }
      std::fprintf(stderr, "\n");
    }
    if (static_cast<int>(curve.idx.size()) < minSupport) continue;

    for (std::size_t i = 0; i < curve.idx.size(); ++i) {
      const auto k = static_cast<std::size_t>(curve.idx[i]);
      for (std::size_t j = 0; j < steps[k].size(); ++j) {
        if (std::abs(steps[k][j].z(0) - curve.value[i]) <= claimTol) {
          claimed[k][j] = 1;
          tried[k][j] = 1;
        }
      }
    }
    out.push_back(std::move(curve));
  }
  return out;
}

}  // namespace stjpda::association
