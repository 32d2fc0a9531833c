#include "stjpda/temporal.hpp"

#include "stjpda/linalg.hpp"

namespace stjpda::temporal {

Gaussian predict(const Gaussian& state, const Matrix& Fbar, const Matrix& Qbar) {
  const Eigen::Index n = state.x.size();
  require(state.P.rows() == n && state.P.cols() == n && Fbar.rows() == n &&
              Fbar.cols() == n && Qbar.rows() == n && Qbar.cols() == n,
          ErrorCode::InvalidArgument, "predict dimension mismatch");
  Gaussian out;
  out.x = Fbar * state.x;
  out.P = Fbar * state.P * Fbar.transpose() + Qbar;
  linalg::symmetrize(out.P);
  return out;
}

Gaussian predict(const Gaussian& state, const coupling::StackedModel& model) {
  return predict(state, model.Fbar, model.Qbar);
}

Gaussian update(const Gaussian& pred, const Vector& z, const Matrix& R, const Matrix& H) {
  const Eigen::Index n = pred.x.size();
  const Eigen::Index r = z.size();
  require(H.rows() == r && H.cols() == n && R.rows() == r && R.cols() == r,
          ErrorCode::InvalidArgument, "update dimension mismatch");

  Matrix S = H * pred.P * H.transpose() + R;
  linalg::symmetrize(S);
  Eigen::LDLT<Matrix> ldlt(S);
  require(ldlt.info() == Eigen::Success, ErrorCode::Numerical,
          "innovation covariance is not factorizable");

  // K = P H' S^{-1}, formed as a solve on S.
  const Matrix K = ldlt.solve(H * pred.P).transpose();

  Gaussian out;
  out.x = pred.x + K * (z - H * pred.x);
  out.P = pred.P - K * S * K.transpose();
  linalg::symmetrize(out.P);
  return out;
}

Gaussian missing_update(const Gaussian& pred, const PartialMeasurement& meas,
                        const Matrix& HbarFull) {
  const Eigen::Index r = static_cast<Eigen::Index>(meas.rows.size());
  require(meas.z.size() == r && meas.rvar.size() == r, ErrorCode::InvalidArgument,
          "partial measurement rows, values, and variances must align");
  if (r == 0) return pred;

  Matrix H(r, HbarFull.cols());
  for (Eigen::Index i = 0; i < r; ++i) {
    const Eigen::Index row = meas.rows[static_cast<std::size_t>(i)];
    require(row >= 0 && row < HbarFull.rows(), ErrorCode::InvalidArgument,
            "partial measurement row index out of range");
    if (i > 0) {
      require(row > meas.rows[static_cast<std::size_t>(i - 1)], ErrorCode::InvalidArgument,
              "partial measurement rows must be sorted and distinct");
    }
    require(meas.rvar(i) > 0.0, ErrorCode::InvalidArgument,
            "partial measurement variances must be positive");
    H.row(i) = HbarFull.row(row);
  }

  const Matrix R = meas.rvar.asDiagonal();
  return update(pred, meas.z, R, H);
}

}  // namespace stjpda::temporal
