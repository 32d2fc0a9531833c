#include "stjpda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stjpda/linalg.hpp"

namespace stjpda::metrics {

namespace {

// Number of grid points where both entries are finite and closer than thr.
int correct_points(const Vector& pred, const Vector& truth, double thr) {
  require(pred.size() == truth.size(), ErrorCode::InvalidArgument,
          "lanes must share one index grid");
  int n = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (std::isfinite(pred(i)) && std::isfinite(truth(i)) &&
        std::abs(pred(i) - truth(i)) < thr) {
      ++n;
    }
  }
  return n;
}

int finite_points(const Vector& lane) {
  int n = 0;
  for (Eigen::Index i = 0; i < lane.size(); ++i) {
    if (std::isfinite(lane(i))) ++n;
  }
  return n;
}

// Optimal one-to-one lane matching maximizing total correct points.
// Returns per-truth-lane predicted index, -1 when unmatched.
std::vector<int> match_lanes(const LaneSet& predicted, const LaneSet& truth,
                             double thr) {
  if (truth.empty() || predicted.empty()) {
    return std::vector<int>(truth.size(), -1);
  }
  Matrix cost(static_cast<Eigen::Index>(truth.size()),
              static_cast<Eigen::Index>(predicted.size()));
  for (std::size_t t = 0; t < truth.size(); ++t) {
    for (std::size_t p = 0; p < predicted.size(); ++p) {
      cost(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p)) =
          -static_cast<double>(correct_points(predicted[p], truth[t], thr));
    }
  }
  return linalg::solve_assignment(cost);
}

}  // namespace

double accuracy(const std::vector<LaneSet>& predicted,
                const std::vector<LaneSet>& truth, double pointThreshold) {
  require(predicted.size() == truth.size(), ErrorCode::InvalidArgument,
          "predicted and truth frame counts must agree");
  require(pointThreshold > 0.0, ErrorCode::InvalidArgument,
          "point threshold must be positive");

  long correct = 0;
  long requested = 0;
  for (std::size_t f = 0; f < truth.size(); ++f) {
    for (const Vector& lane : truth[f]) requested += finite_points(lane);
    const std::vector<int> match = match_lanes(predicted[f], truth[f], pointThreshold);
    for (std::size_t t = 0; t < truth[f].size(); ++t) {
      if (match[t] < 0) continue;
      correct += correct_points(predicted[f][static_cast<std::size_t>(match[t])],
                                truth[f][t], pointThreshold);
    }
  }
  require(requested > 0, ErrorCode::InvalidArgument,
          "accuracy needs non-empty ground truth");
  return static_cast<double>(correct) / static_cast<double>(requested);
}

std::pair<double, double> fp_fn(const LaneSet& predicted, const LaneSet& truth,
                                double matchFraction, double pointThreshold) {
  require(matchFraction >= 0.0 && matchFraction <= 1.0, ErrorCode::InvalidArgument,
          "match fraction must lie in [0, 1]");

  const std::vector<int> match = match_lanes(predicted, truth, pointThreshold);
  int matched = 0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (match[t] < 0) continue;
    const int total = finite_points(truth[t]);
    if (total == 0) continue;
    const double laneAcc =
        static_cast<double>(correct_points(
            predicted[static_cast<std::size_t>(match[t])], truth[t], pointThreshold)) /
        total;
    if (laneAcc >= matchFraction) ++matched;
  }

  const double fp =
      predicted.empty()
          ? 0.0
          : static_cast<double>(static_cast<int>(predicted.size()) - matched) /
                static_cast<double>(predicted.size());
  const double fn =
      truth.empty()
          ? 0.0
          : static_cast<double>(static_cast<int>(truth.size()) - matched) /
                static_cast<double>(truth.size());
  return {fp, fn};
}

double nees(const std::vector<Vector>& errors, const std::vector<Matrix>& covariances) {
  require(!errors.empty() && errors.size() == covariances.size(),
          ErrorCode::InvalidArgument, "errors and covariances must align");
  double acc = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const Vector& e = errors[i];
    const Matrix& P = covariances[i];
    require(P.rows() == e.size() && P.cols() == e.size(), ErrorCode::InvalidArgument,
            "consistency statistic dimension mismatch");
    Eigen::LLT<Matrix> llt(P);
    require(llt.info() == Eigen::Success, ErrorCode::Numerical,
            "consistency statistic needs positive definite covariances");
    acc += llt.matrixL().solve(e).squaredNorm();
  }
  return acc / static_cast<double>(errors.size());
}

std::vector<double> rmse_per_target(const std::vector<LaneSet>& predicted,
                                    const std::vector<LaneSet>& truth,
                                    double pointThreshold) {
  require(predicted.size() == truth.size(), ErrorCode::InvalidArgument,
          "predicted and truth frame counts must agree");

  std::size_t targets = 0;
  for (const LaneSet& lanes : truth) targets = std::max(targets, lanes.size());

  std::vector<double> sq(targets, 0.0);
  std::vector<long> count(targets, 0);
  for (std::size_t f = 0; f < truth.size(); ++f) {
    const std::vector<int> match = match_lanes(predicted[f], truth[f], pointThreshold);
    for (std::size_t t = 0; t < truth[f].size(); ++t) {
      if (match[t] < 0) continue;
      const Vector& p = predicted[f][static_cast<std::size_t>(match[t])];
      const Vector& g = truth[f][t];
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        if (!std::isfinite(p(i)) || !std::isfinite(g(i))) continue;
        sq[t] += (p(i) - g(i)) * (p(i) - g(i));
        count[t] += 1;
      }
    }
  }

  std::vector<double> out(targets, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = 0; t < targets; ++t) {
    if (count[t] > 0) out[t] = std::sqrt(sq[t] / static_cast<double>(count[t]));
  }
  return out;
}

}  // namespace stjpda::metrics
