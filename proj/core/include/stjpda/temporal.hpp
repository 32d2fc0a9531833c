#pragma once

#include <vector>

#include "stjpda/coupling.hpp"
#include "stjpda/types.hpp"

namespace stjpda::temporal {

struct Gaussian {
  Vector x;
  Matrix P;
};

// x' = Fbar x, P' = Fbar P Fbar' + Qbar.
Gaussian predict(const Gaussian& state, const Matrix& Fbar, const Matrix& Qbar);
Gaussian predict(const Gaussian& state, const coupling::StackedModel& model);

// Standard Kalman update with emission H and measurement covariance R; the
// gain comes from a solve against the innovation covariance.
Gaussian update(const Gaussian& pred, const Vector& z, const Matrix& R, const Matrix& H);

// A measurement covering only some rows of a full emission matrix: `rows`
// lists the retained rows of Hbar, z their values, rvar their independent
// noise variances. Rows must be distinct and sorted ascending.
struct PartialMeasurement {
  std::vector<Eigen::Index> rows;
  Vector z;
  Vector rvar;
};

// Kalman update on the surviving rows only. An empty row set returns the
// prediction unchanged; absent entries influence the posterior only through
// the covariance coupling carried by the retained rows.
Gaussian missing_update(const Gaussian& pred, const PartialMeasurement& meas,
                        const Matrix& HbarFull);

}  // namespace stjpda::temporal
