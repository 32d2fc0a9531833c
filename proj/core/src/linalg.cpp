#include "stjpda/linalg.hpp"

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>

namespace stjpda::linalg {

namespace {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

// One Bartels-Stewart pass on the complex Schur form: solves
// A X + X A' = -C for symmetric C, returning the real symmetric solution.
Matrix lyapunov_pass(const Eigen::ComplexSchur<Matrix>& schur, const Matrix& C) {
  const ComplexMatrix& T = schur.matrixT();
  const ComplexMatrix& U = schur.matrixU();
  const Eigen::Index n = T.rows();

  ComplexMatrix Ct = U.adjoint() * C.cast<std::complex<double>>() * U;
  ComplexMatrix Y(n, n);

  // T Y + Y T^H = -Ct. Column j couples only to columns > j, so sweep from
  // the last column down, each step an upper-triangular solve.
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    ComplexVector rhs = -Ct.col(j);
    for (Eigen::Index k = j + 1; k < n; ++k) {
      rhs -= std::conj(T(j, k)) * Y.col(k);
    }
    ComplexMatrix M = T;
    M.diagonal().array() += std::conj(T(j, j));
    for (Eigen::Index d = 0; d < n; ++d) {
      require(std::abs(M(d, d)) > 1e-300, ErrorCode::Numerical,
              "Lyapunov solve requires a strictly stable (Hurwitz) drift matrix");
    }
    Y.col(j) = M.triangularView<Eigen::Upper>().solve(rhs);
  }

  Matrix X = (U * Y * U.adjoint()).real();
  symmetrize(X);
  return X;
}

}  // namespace

Matrix kron(const Matrix& A, const Matrix& B) {
  return Eigen::kroneckerProduct(A, B).eval();
}

Matrix expm(const Matrix& A) {
  require(A.rows() == A.cols(), ErrorCode::InvalidArgument,
          "matrix exponential needs a square matrix");
  return A.exp();
}

Matrix solve_lyapunov(const Matrix& A, const Matrix& C) {
  require(A.rows() == A.cols() && C.rows() == C.cols() && A.rows() == C.rows(),
          ErrorCode::InvalidArgument, "Lyapunov solve needs square A, C of equal size");
  require((C - C.transpose()).cwiseAbs().maxCoeff() <=
              1e-10 * std::max(1.0, C.cwiseAbs().maxCoeff()),
          ErrorCode::InvalidArgument, "Lyapunov right-hand side must be symmetric");

  Eigen::ComplexSchur<Matrix> schur(A);
  require(schur.info() == Eigen::Success, ErrorCode::Numerical,
          "Schur decomposition failed in Lyapunov solve");
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    require(schur.matrixT()(i, i).real() < 0.0, ErrorCode::Numerical,
            "Lyapunov solve requires a strictly stable (Hurwitz) drift matrix");
  }

  Matrix X = lyapunov_pass(schur, C);

  // One iterative refinement pass against the original equation.
  Matrix R = A * X + X * A.transpose() + C;
  const double scale = std::max(1.0, C.cwiseAbs().maxCoeff());
  if (R.cwiseAbs().maxCoeff() > 1e-14 * scale) {
    X += lyapunov_pass(schur, R);
    symmetrize(X);
  }
  return X;
}

std::vector<std::complex<double>> polynomial_roots(const Vector& coeffs) {
  const Eigen::Index n = coeffs.size();
  require(n >= 1, ErrorCode::InvalidArgument, "polynomial must have degree >= 1");

  Matrix companion = Matrix::Zero(n, n);
  companion.block(1, 0, n - 1, n - 1).setIdentity();
  companion.col(n - 1) = -coeffs;

  Eigen::EigenSolver<Matrix> es(companion, /*computeEigenvectors=*/false);
  require(es.info() == Eigen::Success, ErrorCode::Numerical,
          "companion-matrix eigensolve failed");

  std::vector<std::complex<double>> roots(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) roots[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
  return roots;
}

Vector polynomial_from_roots(const std::vector<std::complex<double>>& roots) {
  std::vector<std::complex<double>> coeffs{1.0};
  for (const auto& r : roots) {
    std::vector<std::complex<double>> next(coeffs.size() + 1, 0.0);
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      next[i + 1] += coeffs[i];
      next[i] -= r * coeffs[i];
    }
    coeffs = std::move(next);
  }

  double scale = 0.0;
  for (const auto& c : coeffs) scale = std::max(scale, std::abs(c));
  Vector out(static_cast<Eigen::Index>(coeffs.size()) - 1);
  for (std::size_t i = 0; i + 1 < coeffs.size(); ++i) {
    require(std::abs(coeffs[i].imag()) <= 1e-8 * std::max(1.0, scale),
            ErrorCode::Numerical,
            "polynomial expansion left a non-negligible imaginary residue");
    out(static_cast<Eigen::Index>(i)) = coeffs[i].real();
  }
  return out;
}

void symmetrize(Matrix& M) { M = ((M + M.transpose()) * 0.5).eval(); }

double log_mvn_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  const Eigen::Index n = x.size();
  require(mean.size() == n && cov.rows() == n && cov.cols() == n,
          ErrorCode::InvalidArgument, "Gaussian density dimension mismatch");

  Eigen::LLT<Matrix> llt(cov);
  require(llt.info() == Eigen::Success, ErrorCode::Numerical,
          "Gaussian density needs a positive definite covariance");

  const Vector diff = x - mean;
  const Vector alpha = llt.matrixL().solve(diff);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
  logdet *= 2.0;

  constexpr double kLog2Pi = 1.8378770664093454836;
  return -0.5 * (static_cast<double>(n) * kLog2Pi + logdet + alpha.squaredNorm());
}

double min_eigenvalue(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  require(es.info() == Eigen::Success, ErrorCode::Numerical, "eigenvalue solve failed");
  return es.eigenvalues()(0);
}

std::vector<int> solve_assignment(const Matrix& cost) {
  const Eigen::Index rows = cost.rows();
  const Eigen::Index cols = cost.cols();
  if (rows == 0 || cols == 0) return std::vector<int>(static_cast<std::size_t>(rows), -1);

  if (rows > cols) {
    // Solve on the transpose and invert the column -> row matches.
    std::vector<int> colToRow = solve_assignment(cost.transpose());
    std::vector<int> out(static_cast<std::size_t>(rows), -1);
    for (std::size_t c = 0; c < colToRow.size(); ++c) {
      if (colToRow[c] >= 0) out[static_cast<std::size_t>(colToRow[c])] = static_cast<int>(c);
    }
    return out;
  }

  constexpr double kBig = 1e15;
  const Eigen::Index n = rows, m = cols;
  auto at = [&](Eigen::Index i, Eigen::Index j) {
    const double c = cost(i, j);
    require(!std::isnan(c), ErrorCode::InvalidArgument, "assignment cost must not be NaN");
    return std::isinf(c) ? kBig : c;
  };

  // Potential-based Hungarian algorithm (1-indexed scratch arrays).
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1,
                             std::numeric_limits<double>::infinity());
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = 0;
      double delta = std::numeric_limits<double>::infinity();
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = at(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> out(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    const int i = p[static_cast<std::size_t>(j)];
    if (i == 0) continue;
    // A match that only exists through a forbidden entry is no match.
    if (at(i - 1, j - 1) >= kBig / 2) continue;
    out[static_cast<std::size_t>(i - 1)] = j - 1;
  }
  return out;
}

}  // namespace stjpda::linalg
