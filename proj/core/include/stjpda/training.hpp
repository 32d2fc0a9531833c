#pragma once

#include <optional>
#include <vector>

#include "stjpda/coupling.hpp"
#include "stjpda/kernels.hpp"
#include "stjpda/types.hpp"

namespace stjpda::training {

// Labeled curves: per target, index locations and observed values, plus the
// shared observation-noise variance.
struct TrainingSet {
  std::vector<Vector> inputs;  // u locations per target
  std::vector<Vector> values;  // observed values per target, aligned with inputs
  double noiseVar = 0.0;       // sigma_n^2

  int targets() const { return static_cast<int>(inputs.size()); }
  int totalPoints() const;
  void validate() const;
};

struct TrainedModel {
  kernels::KernelHyperparams hyperparams;
  Matrix B;  // coregionalization matrix (symmetric PSD, positive diagonal)
  kernels::ContinuousStateSpace cssm;
  kernels::DiscreteStateSpace ssm;
  bool converged = false;
  int iterations = 0;
  double finalNlml = 0.0;
};

// Negative log marginal likelihood
//   1/2 z' (K + sn2 I)^{-1} z + 1/2 log det(K + sn2 I) + (n/2) log 2pi
// with K[d,e](i,j) = B(d,e) k(u_d[i], u_e[j]). A jitter of 1e-9 escalating
// by x10 (at most 3 times) is added when the Cholesky factorization fails;
// persistent failure raises a conditioning error.
double nlml(const kernels::KernelHyperparams& hp, const Matrix& B,
            const TrainingSet& data);

struct TrainOptions {
  int maxIters = 200;
  double gradTol = 1e-6;     // infinity norm of the gradient
  double relTol = 1e-10;     // relative objective change
  bool optimizeNoise = false;
  double Ts = 1.0;           // discretization step for the emitted model
  int rbfOrder = 2;
};

struct TrainInit {
  kernels::KernelHyperparams hyperparams;
  Matrix B;  // empty -> identity
};

// BFGS minimization of the NLML over (log sigma2, log ell, Cholesky factor
// of B), then assembly of the state-space matrices for the trained kernel.
// On non-convergence within maxIters the best-so-far point is returned with
// converged = false.
TrainedModel train(const TrainingSet& data, kernels::KernelFamily family,
                   const TrainInit& init, const TrainOptions& opts = TrainOptions());

namespace detail {

// Unconstrained parameter vector: [log sigma2, log ell, lower-triangle of
// the B Cholesky factor row-major with log-diagonal, (log noiseVar)].
// Exposed for gradient tests.
struct Objective {
  const TrainingSet* data;
  kernels::KernelFamily family;
  bool optimizeNoise;
  int D;

  int paramCount() const;
  Vector pack(const kernels::KernelHyperparams& hp, const Matrix& B,
              double noiseVar) const;
  void unpack(const Vector& theta, kernels::KernelHyperparams* hp, Matrix* B,
              double* noiseVar) const;
  // Value and (optionally) the analytic gradient.
  double eval(const Vector& theta, Vector* grad) const;
};

}  // namespace detail

}  // namespace stjpda::training
