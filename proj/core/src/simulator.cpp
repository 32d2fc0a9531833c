#include "stjpda/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stjpda/linalg.hpp"

namespace stjpda::simulator {

std::uint64_t Rng::next() {
  // splitmix64: tiny, high-quality, and identical on every platform.
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (hasSpare_) {
    hasSpare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  hasSpare_ = true;
  return r * std::cos(a);
}

int Rng::poisson(double mean) {
  require(std::isfinite(mean) && mean >= 0.0, ErrorCode::InvalidArgument,
          "Poisson mean must be non-negative");
  if (mean == 0.0) return 0;
  if (mean > 30.0) {
    // Sum of independent halves is Poisson again; keeps the product method
    // inside a numerically comfortable range.
    const double half = 0.5 * mean;
    return poisson(half) + poisson(mean - half);
  }
  const double limit = std::exp(-mean);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= uniform();
  } while (p > limit);
  return k - 1;
}

Vector Rng::normals(Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

namespace {

// T with T T' = M for symmetric PSD M, via the eigendecomposition with
// negative (roundoff) eigenvalues clamped to zero.
Matrix sqrt_psd_factor(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(M);
  require(es.info() == Eigen::Success, ErrorCode::Numerical,
          "eigendecomposition failed while factorizing a sampling covariance");
  Vector lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal();
}

double maneuver_progress(const ManeuverSpec& spec, int frame) {
  if (frame < spec.frameBegin) return 0.0;
  const int span = std::max(1, spec.frameEnd - 1 - spec.frameBegin);
  return std::min(1.0, static_cast<double>(frame - spec.frameBegin) / span);
}

void apply_schedule(const std::vector<ManeuverSpec>& schedule, int frame, Matrix* vals) {
  for (const ManeuverSpec& spec : schedule) {
    const double p = maneuver_progress(spec, frame);
    if (p <= 0.0) continue;
    const Vector rowA = vals->row(spec.targetA);
    const Vector rowB = vals->row(spec.targetB);
    switch (spec.mode) {
      case ManeuverMode::Merge: {
        // B slides onto A, coinciding over the last quarter of the ramp.
        const double beta = std::min(1.0, p / 0.75);
        vals->row(spec.targetB) = rowB + beta * (rowA - rowB);
        break;
      }
      case ManeuverMode::Split: {
        // Starts coincident with A and releases to its own curve.
        const double beta = 1.0 - std::min(1.0, p / 0.75);
        vals->row(spec.targetB) = rowB + beta * (rowA - rowB);
        break;
      }
      case ManeuverMode::Cross: {
        vals->row(spec.targetA) = rowA + p * (rowB - rowA);
        vals->row(spec.targetB) = rowB + p * (rowA - rowB);
        break;
      }
    }
  }
}

}  // namespace

void ScenarioConfig::validate() const {
  require(D >= 1, ErrorCode::InvalidArgument, "target count must be positive");
  require(N() >= 2, ErrorCode::InvalidArgument, "need at least two index points");
  for (int i = 1; i < N(); ++i) {
    require(indexPoints(i) > indexPoints(i - 1), ErrorCode::InvalidArgument,
            "index points must be strictly ascending");
  }
  spatial.validate();
  temporal.validate();
  if (Btrue.size() != 0) {
    require(Btrue.rows() == D && Btrue.cols() == D, ErrorCode::InvalidArgument,
            "coregionalization size must match the target count");
    (void)coupling::CoregionalizationMatrix(Btrue);
  }
  require(Pd > 0.0 && Pd <= 1.0, ErrorCode::InvalidArgument,
          "detection probability must lie in (0, 1]");
  require(std::isfinite(clutterRate) && clutterRate >= 0.0, ErrorCode::InvalidArgument,
          "clutter rate must be non-negative");
  require(std::isfinite(noiseStd) && noiseStd > 0.0, ErrorCode::InvalidArgument,
          "measurement noise std must be positive");
  require(frames >= 1, ErrorCode::InvalidArgument, "frame count must be positive");
  require(std::isfinite(frameDt) && frameDt > 0.0, ErrorCode::InvalidArgument,
          "frame period must be positive");
  require(uJitter >= 0.0, ErrorCode::InvalidArgument, "index jitter must be non-negative");
  for (const ManeuverSpec& spec : schedule) {
    require(spec.frameBegin >= 0 && spec.frameBegin < spec.frameEnd &&
                spec.frameEnd <= frames,
            ErrorCode::InvalidArgument, "maneuver frame range is invalid");
    require(spec.targetA >= 0 && spec.targetA < D && spec.targetB >= 0 &&
                spec.targetB < D && spec.targetA != spec.targetB,
            ErrorCode::InvalidArgument, "maneuver targets are invalid");
  }
}

GroundTruth generate(const ScenarioConfig& config) {
  config.validate();
  Rng rng(config.seed);

  const int D = config.D;
  const int N = config.N();
  const int T = config.frames;
  const Matrix Bmat =
      config.Btrue.size() == 0 ? Matrix::Identity(D, D) : Matrix(config.Btrue);
  const coupling::CoregionalizationMatrix B(Bmat);

  GroundTruth out;
  out.truthValues.assign(static_cast<std::size_t>(T), Matrix::Zero(D, N));

  if (config.generator == Generator::GPDraw) {
    Matrix Ku = kernels::gram(config.spatial, config.indexPoints, config.indexPoints);
    Ku.diagonal().array() += 1e-9 * config.spatial.sigma2;

    const kernels::ContinuousStateSpace cssm =
        kernels::to_cssm(config.temporal, config.rbfOrder);
    const kernels::DiscreteStateSpace ssm = kernels::discretize(cssm, config.frameDt);
    const coupling::StackedModel model =
        coupling::stack_model(D, ssm, B, Ku, config.indexPoints);
    const int s = model.s;

    const Matrix T0 = sqrt_psd_factor(model.Pbar0);
    const Matrix Tq = sqrt_psd_factor(model.Qbar);

    Vector x = T0 * rng.normals(model.dim());
    out.states.push_back(x);
    for (int f = 1; f < T; ++f) {
      x = model.Fbar * x + Tq * rng.normals(model.dim());
      out.states.push_back(x);
    }
    for (int f = 0; f < T; ++f) {
      for (int d = 0; d < D; ++d) {
        for (int i = 0; i < N; ++i) {
          out.truthValues[static_cast<std::size_t>(f)](d, i) =
              out.states[static_cast<std::size_t>(f)]((d * N + i) * s);
        }
      }
    }
    out.statesConsistent = config.schedule.empty();
  } else {
    // Quadratic lanes: one set of coefficients per target, fixed over time.
    const double spacing = 3.0 * std::sqrt(config.spatial.sigma2);
    const double ubar = config.indexPoints.mean();
    const double urange =
        config.indexPoints(N - 1) - config.indexPoints(0);
    Matrix coef(D, 3);
    for (int d = 0; d < D; ++d) {
      coef(d, 0) = (d - 0.5 * (D - 1)) * spacing + 0.2 * spacing * rng.uniform(-1.0, 1.0);
      coef(d, 1) = rng.uniform(-1.0, 1.0) * spacing / urange;
      coef(d, 2) = rng.uniform(-1.0, 1.0) * spacing / (urange * urange);
    }
    for (int f = 0; f < T; ++f) {
      for (int d = 0; d < D; ++d) {
        for (int i = 0; i < N; ++i) {
          const double du = config.indexPoints(i) - ubar;
          out.truthValues[static_cast<std::size_t>(f)](d, i) =
              coef(d, 0) + coef(d, 1) * du + coef(d, 2) * du * du;
        }
      }
    }
    out.statesConsistent = false;
  }

  for (int f = 0; f < T; ++f) {
    apply_schedule(config.schedule, f, &out.truthValues[static_cast<std::size_t>(f)]);
  }
  if (!config.schedule.empty()) out.statesConsistent = false;

  out.uLo = config.indexPoints(0);
  out.uHi = config.indexPoints(N - 1);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const Matrix& vals : out.truthValues) {
    lo = std::min(lo, vals.minCoeff());
    hi = std::max(hi, vals.maxCoeff());
  }
  out.valueLo = lo - 3.0 * config.noiseStd;
  out.valueHi = hi + 3.0 * config.noiseStd;

  const double clutterMean = config.clutterRate * out.area();
  out.frames.assign(static_cast<std::size_t>(T), {});
  out.origins.assign(static_cast<std::size_t>(T), {});
  for (int f = 0; f < T; ++f) {
    auto& dets = out.frames[static_cast<std::size_t>(f)];
    auto& orig = out.origins[static_cast<std::size_t>(f)];
    for (int d = 0; d < D; ++d) {
      for (int i = 0; i < N; ++i) {
        if (rng.uniform() >= config.Pd) continue;
        association::Detection det;
        det.u = config.indexPoints(i);
        if (config.uJitter > 0.0) {
          det.u += rng.uniform(-config.uJitter, config.uJitter);
        }
        det.z = Vector::Constant(
            1, out.truthValues[static_cast<std::size_t>(f)](d, i) +
                   config.noiseStd * rng.normal());
        det.frame = f;
        dets.push_back(std::move(det));
        orig.push_back(d);
      }
    }
    const int nClutter = rng.poisson(clutterMean);
    for (int c = 0; c < nClutter; ++c) {
      association::Detection det;
      det.u = rng.uniform(out.uLo, out.uHi);
      det.z = Vector::Constant(1, rng.uniform(out.valueLo, out.valueHi));
      det.frame = f;
      dets.push_back(std::move(det));
      orig.push_back(-1);
    }
  }
  return out;
}

double surveillance_volume(const ScenarioConfig& config) {
  return generate(config).area();
}

}  // namespace stjpda::simulator
