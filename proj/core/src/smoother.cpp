#include "stjpda/smoother.hpp"

#include "stjpda/linalg.hpp"

namespace stjpda::smoother {

FilterHistory::FilterHistory(int lag) : lag_(lag) {
  require(lag >= 0, ErrorCode::InvalidArgument, "smoother lag must be non-negative");
}

void FilterHistory::push(FilterStep step) {
  const Eigen::Index n = step.xFilt.size();
  require(step.PFilt.rows() == n && step.PFilt.cols() == n && step.xPred.size() == n &&
              step.PPred.rows() == n && step.PPred.cols() == n && step.F.rows() == n &&
              step.F.cols() == n,
          ErrorCode::InvalidArgument, "filter history step dimensions disagree");
  if (!steps_.empty()) {
    require(steps_.back().xFilt.size() == n, ErrorCode::InvalidArgument,
            "filter history steps must share one state dimension");
  }
  steps_.push_back(std::move(step));
  while (static_cast<int>(steps_.size()) > lag_ + 1) steps_.pop_front();
}

void FilterHistory::clear() { steps_.clear(); }

std::vector<SmoothedEstimate> smooth_window(const FilterHistory& history) {
  const int n = history.size();
  std::vector<SmoothedEstimate> out(static_cast<std::size_t>(n));
  if (n == 0) return out;

  out[static_cast<std::size_t>(n - 1)] = {history.at(n - 1).xFilt, history.at(n - 1).PFilt};

  for (int k = n - 2; k >= 0; --k) {
    const FilterStep& step = history.at(k);
    const SmoothedEstimate& next = out[static_cast<std::size_t>(k + 1)];

    // G = P_{k|k} F' P_{k+1|k}^{-1}, via a solve on the predicted covariance.
    Eigen::LDLT<Matrix> ldlt(step.PPred);
    require(ldlt.info() == Eigen::Success, ErrorCode::Numerical,
            "smoother predicted covariance is not factorizable");
    const Matrix G = ldlt.solve(step.F * step.PFilt).transpose();

    SmoothedEstimate est;
    est.x = step.xFilt + G * (next.x - step.xPred);
    est.P = step.PFilt + G * (next.P - step.PPred) * G.transpose();
    linalg::symmetrize(est.P);
    out[static_cast<std::size_t>(k)] = std::move(est);
  }
  return out;
}

std::optional<SmoothedEstimate> fixed_lag_output(const FilterHistory& history) {
  if (!history.full()) return std::nullopt;
  return smooth_window(history).front();
}

}  // namespace stjpda::smoother
