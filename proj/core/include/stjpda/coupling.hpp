#pragma once

#include <vector>

#include "stjpda/kernels.hpp"
#include "stjpda/types.hpp"

namespace stjpda::coupling {

// Symmetric positive semidefinite matrix encoding cross-target dependence.
// Diagonal entries must be strictly positive.
class CoregionalizationMatrix {
 public:
  explicit CoregionalizationMatrix(Matrix B);

  static CoregionalizationMatrix identity(int D);
  // B = a a' + eps I; eps keeps the diagonal usable when some a_d = 0.
  static CoregionalizationMatrix rank_one(const Vector& a, double eps = 0.0);

  const Matrix& matrix() const { return B_; }
  int dim() const { return static_cast<int>(B_.rows()); }

  // Leading principal d x d sub-block, identity-extended past dim().
  Matrix leading(int d) const;

 private:
  Matrix B_;
};

// Cross-target covariance B (x) Ku for a D-target batch observed on a common
// index grid with Gram matrix Ku.
Matrix coupled_kernel(const CoregionalizationMatrix& B, const Matrix& Ku);

// Joint state-space model for D targets, each carrying one latent function
// sampled at N index points with per-point state order s. State layout is
// target-major: x = [target 0: point 0 state, point 1 state, ...; target 1: ...].
struct StackedModel {
  int D = 0;  // targets
  int N = 0;  // index points per target
  int s = 0;  // per-point state dimension
  Matrix Fbar;   // (D N s) x (D N s) block-diagonal transition
  Matrix Qbar;   // process noise with cross-target and cross-point coupling
  Matrix Pbar0;  // stationary initial covariance
  Matrix Hbar;   // (D N) x (D N s) emission picking each point's value
  Vector indexPoints;  // the N spatial locations behind Ku

  int dim() const { return D * N * s; }
};

// Builds the stacked model from a per-point discrete model, the coupling
// matrix, and the index-point Gram matrix Ku (N x N). When indexPoints is
// empty it defaults to 0..N-1; otherwise it must hold the N locations that
// produced Ku.
StackedModel stack_model(int D, const kernels::DiscreteStateSpace& ssm,
                         const CoregionalizationMatrix& B, const Matrix& Ku,
                         const Vector& indexPoints = Vector());

// Concatenates per-target state vectors into the stacked layout.
Vector stack_states(const std::vector<Vector>& perTarget);

// Splits a stacked state vector into D equal per-target segments.
std::vector<Vector> unstack_states(const Vector& stacked, int D);

}  // namespace stjpda::coupling
