#pragma once

#include "stjpda/types.hpp"

namespace stjpda::kernels {

enum class KernelFamily { RBF, Matern32 };

struct KernelHyperparams {
  KernelFamily family = KernelFamily::Matern32;
  double sigma2 = 1.0;  // signal variance
  double ell = 1.0;     // length scale

  void validate() const;
};

// Continuous-time companion-form state-space model
//   ds(t) = A s(t) dt + L dW(t),   y(t) = H s(t),
// with scalar white-noise intensity Qc and stationary covariance Pinf.
struct ContinuousStateSpace {
  Matrix A;
  Vector L;
  RowVector H;
  double Qc = 0.0;
  Matrix Pinf;

  int order() const { return static_cast<int>(A.rows()); }
};

// Exact discretization of a ContinuousStateSpace on a step Ts.
struct DiscreteStateSpace {
  Matrix F;
  Matrix Q;
  RowVector H;
  Matrix P0;
  double Ts = 0.0;

  int order() const { return static_cast<int>(F.rows()); }
};

// Even rational approximation of a spectral density:
//   S(w) ~ prefactor / sum_n denomCoeffs[n] * w^(2n),  n = 0..order.
struct RationalSpectralDensity {
  double prefactor = 0.0;
  Vector denomCoeffs;  // length order+1, constant term first
  int order = 0;
};

// Stationary covariance value k(tau).
double eval_kernel(const KernelHyperparams& hp, double tau);

// Gram matrix K[i,j] = k(u[i] - v[j]). No jitter is added here; callers that
// factorize must add their own.
Matrix gram(const KernelHyperparams& hp, const Vector& u, const Vector& v);

// Exact state-space form of the Matern 3/2 kernel (order 2).
ContinuousStateSpace matern32_to_cssm(const KernelHyperparams& hp);

// Taylor-truncated rational approximation of the RBF spectral density at
// even order N in {2, 4, 6}.
RationalSpectralDensity rbf_spectral_taylor(const KernelHyperparams& hp, int order);

// Spectral factorization of an even rational density: returns the monic
// stable-polynomial coefficients a[0..order-1] (low order first) such that
// the companion drift matrix built from them has all poles in the open left
// half plane.
Vector stable_factorization(const RationalSpectralDensity& density);

// Approximate state-space form of the RBF kernel at even order N.
ContinuousStateSpace rbf_to_cssm(const KernelHyperparams& hp, int order);

// Family dispatcher; rbfOrder is ignored for Matern 3/2.
ContinuousStateSpace to_cssm(const KernelHyperparams& hp, int rbfOrder = 2);

// Stationary covariance solving A Pinf + Pinf A' + L Qc L' = 0.
Matrix stationary_covariance(const Matrix& A, const Vector& L, double Qc);

// Exact discretization: F = expm(A Ts), Q = Pinf - F Pinf F', P0 = Pinf.
// Ts = 0 is valid and yields F = I, Q = 0.
DiscreteStateSpace discretize(const ContinuousStateSpace& ss, double Ts);

}  // namespace stjpda::kernels
