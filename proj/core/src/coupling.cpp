#include "stjpda/coupling.hpp"

#include <algorithm>
#include <cmath>

#include "stjpda/linalg.hpp"

namespace stjpda::coupling {

CoregionalizationMatrix::CoregionalizationMatrix(Matrix B) : B_(std::move(B)) {
  require(B_.rows() == B_.cols() && B_.rows() >= 1, ErrorCode::InvalidArgument,
          "coregionalization matrix must be square and non-empty");
  const double scale = std::max(1.0, B_.cwiseAbs().maxCoeff());
  require((B_ - B_.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
          ErrorCode::InvalidArgument, "coregionalization matrix must be symmetric");
  linalg::symmetrize(B_);
  for (Eigen::Index d = 0; d < B_.rows(); ++d) {
    require(B_(d, d) > 0.0, ErrorCode::InvalidArgument,
            "coregionalization diagonal entries must be positive");
  }
  require(linalg::min_eigenvalue(B_) >= -1e-10 * scale, ErrorCode::InvalidArgument,
          "coregionalization matrix must be positive semidefinite");
}

CoregionalizationMatrix CoregionalizationMatrix::identity(int D) {
  require(D >= 1, ErrorCode::InvalidArgument, "target count must be positive");
  return CoregionalizationMatrix(Matrix::Identity(D, D));
}

CoregionalizationMatrix CoregionalizationMatrix::rank_one(const Vector& a, double eps) {
  require(a.size() >= 1, ErrorCode::InvalidArgument, "rank-one factor must be non-empty");
  require(eps >= 0.0, ErrorCode::InvalidArgument, "rank-one ridge must be non-negative");
  Matrix B = a * a.transpose();
  B.diagonal().array() += eps;
  return CoregionalizationMatrix(std::move(B));
}

Matrix CoregionalizationMatrix::leading(int d) const {
  require(d >= 1, ErrorCode::InvalidArgument, "sub-block size must be positive");
  if (d <= dim()) return B_.topLeftCorner(d, d);
  Matrix out = Matrix::Identity(d, d);
  out.topLeftCorner(dim(), dim()) = B_;
  return out;
}

Matrix coupled_kernel(const CoregionalizationMatrix& B, const Matrix& Ku) {
  require(Ku.rows() == Ku.cols() && Ku.rows() >= 1, ErrorCode::InvalidArgument,
          "index-point Gram matrix must be square and non-empty");
  return linalg::kron(B.matrix(), Ku);
}

StackedModel stack_model(int D, const kernels::DiscreteStateSpace& ssm,
                         const CoregionalizationMatrix& B, const Matrix& Ku,
                         const Vector& indexPoints) {
  require(D >= 1, ErrorCode::InvalidArgument, "target count must be positive");
  require(B.dim() == D, ErrorCode::InvalidArgument,
          "coregionalization dimension must match the target count");
  require(Ku.rows() == Ku.cols() && Ku.rows() >= 1, ErrorCode::InvalidArgument,
          "index-point Gram matrix must be square and non-empty");

  const int N = static_cast<int>(Ku.rows());
  const int s = ssm.order();

  StackedModel m;
  m.D = D;
  m.N = N;
  m.s = s;
  if (indexPoints.size() == 0) {
    m.indexPoints = Vector::LinSpaced(N, 0.0, static_cast<double>(N - 1));
  } else {
    require(indexPoints.size() == N, ErrorCode::InvalidArgument,
            "index-point list must match the Gram matrix size");
    m.indexPoints = indexPoints;
  }

  const Matrix coupler = coupled_kernel(B, Ku);  // (D N) x (D N)
  m.Fbar = linalg::kron(Matrix::Identity(D * N, D * N), ssm.F);
  m.Qbar = linalg::kron(coupler, ssm.Q);
  m.Pbar0 = linalg::kron(coupler, ssm.P0);
  linalg::symmetrize(m.Qbar);
  linalg::symmetrize(m.Pbar0);

  Matrix H = ssm.H;  // 1 x s
  m.Hbar = linalg::kron(Matrix::Identity(D * N, D * N), H);
  return m;
}

Vector stack_states(const std::vector<Vector>& perTarget) {
  require(!perTarget.empty(), ErrorCode::InvalidArgument,
          "cannot stack an empty state list");
  const Eigen::Index n = perTarget.front().size();
  Vector out(static_cast<Eigen::Index>(perTarget.size()) * n);
  Eigen::Index at = 0;
  for (const auto& x : perTarget) {
    require(x.size() == n, ErrorCode::InvalidArgument,
            "per-target states must share one dimension");
    out.segment(at, n) = x;
    at += n;
  }
  return out;
}

std::vector<Vector> unstack_states(const Vector& stacked, int D) {
  require(D >= 1 && stacked.size() % D == 0, ErrorCode::InvalidArgument,
          "stacked state length must be a positive multiple of the target count");
  const Eigen::Index n = stacked.size() / D;
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(D));
  for (int d = 0; d < D; ++d) out.push_back(stacked.segment(d * n, n));
  return out;
}

}  // namespace stjpda::coupling
