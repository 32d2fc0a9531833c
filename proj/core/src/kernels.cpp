#include "stjpda/kernels.hpp"

#include <cmath>

#include "stjpda/linalg.hpp"

namespace stjpda::kernels {

namespace {

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace

void KernelHyperparams::validate() const {
  require(std::isfinite(sigma2) && sigma2 > 0.0, ErrorCode::InvalidArgument,
          "kernel signal variance must be positive");
  require(std::isfinite(ell) && ell > 0.0, ErrorCode::InvalidArgument,
          "kernel length scale must be positive");
}

double eval_kernel(const KernelHyperparams& hp, double tau) {
  hp.validate();
  switch (hp.family) {
    case KernelFamily::RBF:
      return hp.sigma2 * std::exp(-tau * tau / (2.0 * hp.ell * hp.ell));
    case KernelFamily::Matern32: {
      const double a = std::sqrt(3.0) * std::abs(tau) / hp.ell;
      return hp.sigma2 * (1.0 + a) * std::exp(-a);
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown kernel family");
}

Matrix gram(const KernelHyperparams& hp, const Vector& u, const Vector& v) {
  hp.validate();
  Matrix K(u.size(), v.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      K(i, j) = eval_kernel(hp, u(i) - v(j));
    }
  }
  return K;
}

ContinuousStateSpace matern32_to_cssm(const KernelHyperparams& hp) {
  hp.validate();
  require(hp.family == KernelFamily::Matern32, ErrorCode::InvalidArgument,
          "matern32_to_cssm called with a non-Matern-3/2 kernel");

  const double lambda = std::sqrt(3.0) / hp.ell;
  ContinuousStateSpace ss;
  ss.A.resize(2, 2);
  ss.A << 0.0, 1.0, -lambda * lambda, -2.0 * lambda;
  ss.L.resize(2);
  ss.L << 0.0, 1.0;
  ss.H.resize(2);
  ss.H << 1.0, 0.0;
  ss.Qc = 4.0 * lambda * lambda * lambda * hp.sigma2;
  // Closed form; equals the Lyapunov solution for this drift.
  ss.Pinf.resize(2, 2);
  ss.Pinf << hp.sigma2, 0.0, 0.0, lambda * lambda * hp.sigma2;
  return ss;
}

RationalSpectralDensity rbf_spectral_taylor(const KernelHyperparams& hp, int order) {
  hp.validate();
  require(hp.family == KernelFamily::RBF, ErrorCode::InvalidArgument,
          "rbf_spectral_taylor called with a non-RBF kernel");
  require(order % 2 == 0, ErrorCode::InvalidArgument,
          "RBF state-space approximation order must be even");
  require(order >= 2 && order <= 6, ErrorCode::InvalidArgument,
          "RBF state-space approximation order must be in {2, 4, 6}");

  const double zeta = 1.0 / (2.0 * hp.ell * hp.ell);
  const double nfact = factorial(order);

  RationalSpectralDensity d;
  d.order = order;
  d.prefactor =
      hp.sigma2 * nfact * std::pow(4.0 * zeta, order) * std::sqrt(M_PI / zeta);
  d.denomCoeffs.resize(order + 1);
  for (int n = 0; n <= order; ++n) {
    d.denomCoeffs(n) = nfact * std::pow(4.0 * zeta, order - n) / factorial(n);
  }
  return d;
}

Vector stable_factorization(const RationalSpectralDensity& density) {
  const int N = density.order;
  require(N >= 1 && density.denomCoeffs.size() == N + 1, ErrorCode::InvalidArgument,
          "rational density coefficient count must be order + 1");

  // The denominator is a polynomial in w^2; substituting w^2 -> -x^2 turns
  // it into an even polynomial in x whose roots split symmetrically across
  // the imaginary axis. Degree 2N, coefficient of x^(2n) is (-1)^n c_n.
  const double lead = density.denomCoeffs(N) * ((N % 2 == 0) ? 1.0 : -1.0);
  require(std::abs(lead) > 0.0, ErrorCode::InvalidArgument,
          "rational density has a vanishing leading coefficient");

  Vector monic = Vector::Zero(2 * N);
  for (int n = 0; n < N; ++n) {
    monic(2 * n) = density.denomCoeffs(n) * ((n % 2 == 0) ? 1.0 : -1.0) / lead;
  }

  std::vector<std::complex<double>> stable;
  for (const auto& r : linalg::polynomial_roots(monic)) {
    require(std::abs(r.real()) > 1e-9, ErrorCode::Numerical,
            "spectral factorization found a root on the imaginary axis");
    if (r.real() < 0.0) stable.push_back(r);
  }
  require(static_cast<int>(stable.size()) == N, ErrorCode::Numerical,
          "spectral factorization did not split into N stable roots");

  return linalg::polynomial_from_roots(stable);
}

ContinuousStateSpace rbf_to_cssm(const KernelHyperparams& hp, int order) {
  const RationalSpectralDensity density = rbf_spectral_taylor(hp, order);
  const Vector a = stable_factorization(density);

  ContinuousStateSpace ss;
  ss.A = Matrix::Zero(order, order);
  if (order > 1) ss.A.block(0, 1, order - 1, order - 1).setIdentity();
  ss.A.row(order - 1) = -a.transpose();
  ss.L = Vector::Zero(order);
  ss.L(order - 1) = 1.0;
  ss.H = RowVector::Zero(order);
  ss.H(0) = 1.0;
  ss.Qc = density.prefactor;
  ss.Pinf = stationary_covariance(ss.A, ss.L, ss.Qc);
  return ss;
}

ContinuousStateSpace to_cssm(const KernelHyperparams& hp, int rbfOrder) {
  switch (hp.family) {
    case KernelFamily::RBF:
      return rbf_to_cssm(hp, rbfOrder);
    case KernelFamily::Matern32:
      return matern32_to_cssm(hp);
  }
  fail(ErrorCode::InvalidArgument, "unknown kernel family");
}

Matrix stationary_covariance(const Matrix& A, const Vector& L, double Qc) {
  require(Qc > 0.0, ErrorCode::InvalidArgument,
          "white-noise intensity must be positive");
  const Matrix C = Qc * (L * L.transpose());
  return linalg::solve_lyapunov(A, C);
}

DiscreteStateSpace discretize(const ContinuousStateSpace& ss, double Ts) {
  require(std::isfinite(Ts) && Ts >= 0.0, ErrorCode::InvalidArgument,
          "discretization step must be non-negative");

  DiscreteStateSpace d;
  d.F = linalg::expm(ss.A * Ts);
  d.Q = ss.Pinf - d.F * ss.Pinf * d.F.transpose();
  linalg::symmetrize(d.Q);
  d.H = ss.H;
  d.P0 = ss.Pinf;
  d.Ts = Ts;
  return d;
}

}  // namespace stjpda::kernels
