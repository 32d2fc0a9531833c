#pragma once

#include <complex>
#include <vector>

#include "stjpda/types.hpp"

namespace stjpda::linalg {

// Kronecker product A (x) B.
Matrix kron(const Matrix& A, const Matrix& B);

// Matrix exponential expm(A) (scaling-and-squaring with Pade approximant).
Matrix expm(const Matrix& A);

// Solves the continuous Lyapunov equation A*X + X*A' + C = 0 for symmetric C
// with all eigenvalues of A in the open left half plane. Bartels-Stewart on
// the complex Schur form, followed by one iterative refinement pass.
Matrix solve_lyapunov(const Matrix& A, const Matrix& C);

// Roots of the monic polynomial x^n + c[n-1] x^(n-1) + ... + c[0] via the
// companion-matrix eigenvalues. `coeffs` holds c[0..n-1] (low order first).
std::vector<std::complex<double>> polynomial_roots(const Vector& coeffs);

// Expands prod_i (x - r_i) into monic coefficients, low order first (the
// leading 1 is omitted). Imaginary residue beyond tolerance is an error.
Vector polynomial_from_roots(const std::vector<std::complex<double>>& roots);

// In-place (M + M')/2.
void symmetrize(Matrix& M);

// log N(x; mean, cov) evaluated via Cholesky. Throws a Numerical error when
// cov is not positive definite.
double log_mvn_pdf(const Vector& x, const Vector& mean, const Matrix& cov);

// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& M);

// Minimum-cost one-to-one assignment on an n x m cost matrix (Hungarian
// algorithm, O(max(n,m)^3)). Entries may be +infinity to forbid a pairing.
// Returns per-row column indices, -1 where a row is unassigned or only
// forbidden pairings remain for it.
std::vector<int> solve_assignment(const Matrix& cost);

}  // namespace stjpda::linalg
