#pragma once

#include <cstdint>
#include <vector>

#include "stjpda/coupling.hpp"
#include "stjpda/kernels.hpp"
#include "stjpda/types.hpp"

namespace stjpda::association {

struct Detection {
  double u = 0.0;  // index-axis location
  Vector z;        // measured value, n_z entries
  int frame = 0;   // time index

  void validate() const;
};

enum class TrackStatus { Tentative, Confirmed, Terminated };

struct Track {
  int id = -1;
  Vector xbar;  // this track's state segment (order-s spatial state)
  Matrix Pbar;  // its marginal covariance block
  // Measurement indices validated for this track, one entry per step the
  // track was alive: (step index, indices into that step's detection list).
  std::vector<std::pair<int, std::vector<int>>> assocHistory;
  TrackStatus status = TrackStatus::Tentative;
  double existenceProb = 0.0;
  int consecutiveMisses = 0;
  int spawnStep = 0;
  int couplingSlot = 0;  // row of the coregionalization matrix this track uses
};

// One feasible joint assignment of a step's m measurements to targets.
// assignment[j] is 0 when measurement j is clutter, or t in 1..D when it is
// assigned to target t-1. delta[d] flags whether target d received a
// measurement; phi counts the clutter measurements.
struct JointAssociationEvent {
  std::vector<int> assignment;
  std::vector<std::uint8_t> delta;
  int phi = 0;
  double posterior = 0.0;

  int measurementFor(int target) const;  // index of the measurement, -1 if none
};

struct AssociationConfig {
  double gateThreshold = 9.21;   // gamma, chi-square scale
  double Pd = 0.9;               // per-target detection probability
  double clutterRate = 0.0;      // lambda_c, expected clutter per unit volume
  double volume = 1.0;           // V, surveillance-region measure per step
  Matrix R;                      // measurement-noise covariance, n_z x n_z
  double initDistance = 9.21;    // spawn suppression radius (squared Mahalanobis)
  double confirmThreshold = 0.9;
  double terminateThreshold = 0.1;
  double survivalFactor = 0.98;  // per-step existence survival
  double initExistence = 0.5;    // existence probability at spawn
  std::size_t maxEvents = 1000000;
  bool sweepSpawns = true;  // spawn tentative tracks from unvalidated measurements

  int nz() const { return static_cast<int>(R.rows()); }
  void validate() const;
};

// Per-track, per-step products of the spatial pass, consumed by the
// temporal filter as measurements.
struct PseudoMeasurement {
  int trackId = -1;
  int step = 0;       // index-point position within the frame
  Vector value;       // predicted measurement plus combined innovation
  Matrix covariance;  // innovation covariance inflated by the spread sub-block
  double likelihood = 0.0;  // probability that some validated measurement was target-originated
};

struct PseudoMeasurementSet {
  std::vector<PseudoMeasurement> entries;
};

using ValidationMatrix =
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;  // m x D

// Chi-square gating per target: detection j validates for target d iff
// (z_j - zhat_d)' S_d^{-1} (z_j - zhat_d) < gamma, with S_d the d-th n_z x n_z
// diagonal sub-block of Sbar.
ValidationMatrix gate(const Vector& zbarHat, const Matrix& Sbar,
                      const std::vector<Detection>& detections, double gamma, int nz);

// All feasible joint events for a validation matrix: each measurement maps to
// clutter or one validating target, no target twice. Throws a Combinatorial
// error when more than `cap` events would be produced.
std::vector<JointAssociationEvent> enumerate_events(const ValidationMatrix& validation,
                                                    std::size_t cap = 1000000);

// Unnormalized log prior of an event, combining the clutter-count Poisson
// mass, the combinatorial factor phi!/m!, and the detection indicators:
//   (phi!/m!) Poisson(lambda_c V)(phi) prod_d Pd^delta (1-Pd)^(1-delta).
// May be -inf for zero-probability events.
double log_event_prior(const JointAssociationEvent& event, int m,
                       const AssociationConfig& cfg);
// exp(log_event_prior): the unnormalized prior weight itself.
double event_prior(const JointAssociationEvent& event, int m,
                   const AssociationConfig& cfg);

// Log measurement density of an event: V^(-phi) times the JOINT Gaussian of
// the assigned measurements on the detected-target sub-block of Sbar. The
// joint form is required: with cross-target coupling the density does not
// factorize over targets.
double log_event_likelihood(const JointAssociationEvent& event, const Vector& zbarHat,
                            const Matrix& Sbar, const std::vector<Detection>& detections,
                            double volume, int nz);
double event_likelihood(const JointAssociationEvent& event, const Vector& zbarHat,
                        const Matrix& Sbar, const std::vector<Detection>& detections,
                        double volume, int nz);

// Normalizes posterior_i = prior_i likelihood_i / sum_j prior_j likelihood_j
// in log space and writes it into each event. Throws when every event has
// zero weight.
void event_posteriors(std::vector<JointAssociationEvent>& events,
                      const std::vector<double>& logPriors,
                      const std::vector<double>& logLikelihoods);

struct CoupledUpdateResult {
  Vector x;                 // posterior stacked mean
  Matrix P;                 // posterior stacked covariance
  Vector combinedInnovation;  // vbar = sum_A P(A|Z) vbar_A
  Matrix innovationSpread;    // sum_A P(A|Z) vbar_A vbar_A' - vbar vbar'
  Matrix gain;                // Gbar = Pbar Hbar' Sbar^{-1}
  double beta0 = 0.0;         // posterior mass of the all-clutter event
};

// Probability-weighted coupled update over all events:
//   x+ = x- + G vbar,
//   P+ = beta0 P- + (1 - beta0) Pc + G spread G',  Pc = P- - G Sbar G'.
// Undetected targets contribute zero innovation rows within each event.
CoupledUpdateResult coupled_update(const Vector& xbar, const Matrix& Pbar,
                                   const std::vector<JointAssociationEvent>& events,
                                   const Vector& zbarHat, const Matrix& Sbar,
                                   const Matrix& Hbar,
                                   const std::vector<Detection>& detections, int nz);

// One frame's spatial sweep: recursion along the index axis over `steps`
// (detection sets at consecutive index points, empty sets allowed), with
// coupled prediction, gating, joint association, coupled update, existence
// bookkeeping, spawning, and pseudo-measurement emission. `ssm` is the
// per-gap discretization of the spatial kernel; `B` provides coupling rows
// by spawn order (identity-extended past its dimension).
struct SweepResult {
  std::vector<Track> tracks;  // every track ever spawned, with final status
  PseudoMeasurementSet pseudo;
};

// Informed prior injected at the start of a sweep: a track that exists before
// the first step, carrying a predicted state at the first index point and the
// coupling slot it already owns. Lets consecutive frames' sweeps keep tight
// gates and stable identities instead of re-discovering every curve cold.
struct InitialTrack {
  Vector x;  // order-s spatial state at the first index point
  Matrix P;  // its covariance
  int couplingSlot = 0;
  double existence = 0.9;
};

SweepResult run_integrated_jpdaf(const std::vector<std::vector<Detection>>& steps,
                                 const kernels::DiscreteStateSpace& ssm,
                                 const coupling::CoregionalizationMatrix& B,
                                 const AssociationConfig& cfg,
                                 const std::vector<InitialTrack>& initialTracks);

SweepResult run_integrated_jpdaf(const std::vector<std::vector<Detection>>& steps,
                                 const kernels::DiscreteStateSpace& ssm,
                                 const coupling::CoregionalizationMatrix& B,
                                 const AssociationConfig& cfg);

// One curve recovered from unclaimed detections by a single-track sweep.
struct PeeledCurve {
  std::vector<int> idx;       // step indices with an estimate
  std::vector<double> value;  // filtered value at each such step
};

// Greedy curve recovery: repeatedly seed a single track on the earliest
// unclaimed detection and run a one-track sweep (probabilistic data
// association against clutter) over the unclaimed detections, emitting the
// swept lane when it gathers at least `minSupport` steps and claiming every
// detection within `claimTol` of it. A one-track sweep cannot mix identities,
// so lanes that run inside an existing track's validation gate — invisible
// to spawn-by-unvalidated-measurement — are still recovered, one per pass.
// `claimed[k][j]` marks detections to ignore (already explained by existing
// tracks); pass an empty vector to peel a whole frame cold.
std::vector<PeeledCurve> peel_curves(const std::vector<std::vector<Detection>>& steps,
                                     const kernels::DiscreteStateSpace& ssm,
                                     const AssociationConfig& cfg,
                                     std::vector<std::vector<char>> claimed,
                                     int maxCurves, int minSupport,
                                     double claimTol);

}  // namespace stjpda::association
