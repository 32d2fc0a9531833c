#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "stjpda/types.hpp"

namespace stjpda::smoother {

// One filter step as consumed by the smoother: the posterior at k and the
// one-step prediction toward k+1 under transition F.
struct FilterStep {
  Vector xFilt;
  Matrix PFilt;
  Vector xPred;  // x_{k+1|k}
  Matrix PPred;  // P_{k+1|k}
  Matrix F;      // transition used for that prediction
};

struct SmoothedEstimate {
  Vector x;
  Matrix P;
};

// Ring buffer holding the last (lag + 1) filter steps.
class FilterHistory {
 public:
  explicit FilterHistory(int lag);

  void push(FilterStep step);
  void clear();

  int lag() const { return lag_; }
  int size() const { return static_cast<int>(steps_.size()); }
  bool full() const { return size() == lag_ + 1; }
  const FilterStep& at(int i) const { return steps_.at(static_cast<std::size_t>(i)); }

 private:
  int lag_;
  std::deque<FilterStep> steps_;
};

// Rauch-Tung-Striebel backward pass over the stored window. Returns one
// smoothed estimate per stored step, oldest first; the newest equals its
// filtered estimate. Gains are formed by linear solves against the predicted
// covariance, never explicit inverses, and covariances are symmetrized.
std::vector<SmoothedEstimate> smooth_window(const FilterHistory& history);

// Convenience: the smoothed estimate for the oldest step in a full window,
// i.e. the fixed-lag output once the buffer has lag + 1 entries.
std::optional<SmoothedEstimate> fixed_lag_output(const FilterHistory& history);

}  // namespace stjpda::smoother
