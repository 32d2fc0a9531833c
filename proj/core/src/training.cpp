#include "stjpda/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "stjpda/linalg.hpp"

namespace stjpda::training {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Correlation-part kernel derivative with respect to log ell, including the
// sigma2 factor (i.e. d k(tau) / d log ell).
double kernel_dlogell(const kernels::KernelHyperparams& hp, double tau) {
  switch (hp.family) {
    case kernels::KernelFamily::RBF: {
      const double k = kernels::eval_kernel(hp, tau);
      return k * tau * tau / (hp.ell * hp.ell);
    }
    case kernels::KernelFamily::Matern32: {
      const double a = std::sqrt(3.0) * std::abs(tau) / hp.ell;
      return hp.sigma2 * a * a * std::exp(-a);
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown kernel family");
}

// Assembles the block matrix M[d,e](i,j) = W(d,e) * f(u_d[i], u_e[j]).
Matrix block_matrix(const TrainingSet& data, const Matrix& W,
                    const std::function<double(double, double)>& f) {
  const int D = data.targets();
  const int n = data.totalPoints();
  Matrix K(n, n);
  int rowAt = 0;
  for (int d = 0; d < D; ++d) {
    const Vector& ud = data.inputs[static_cast<std::size_t>(d)];
    int colAt = 0;
    for (int e = 0; e < D; ++e) {
      const Vector& ue = data.inputs[static_cast<std::size_t>(e)];
      for (Eigen::Index i = 0; i < ud.size(); ++i) {
        for (Eigen::Index j = 0; j < ue.size(); ++j) {
          K(rowAt + i, colAt + j) = W(d, e) * f(ud(i), ue(j));
        }
      }
      colAt += static_cast<int>(ue.size());
    }
    rowAt += static_cast<int>(ud.size());
  }
  return K;
}

// Cholesky with the escalating-jitter schedule: base 1e-9 sigma2, scaled x10
// on failure at most three times.
Eigen::LLT<Matrix> factor_with_jitter(const Matrix& Ky, double sigma2) {
  double jitter = 1e-9 * sigma2;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Matrix K = Ky;
    K.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(K);
    if (llt.info() == Eigen::Success) return llt;
    jitter *= 10.0;
  }
  fail(ErrorCode::Numerical,
       "marginal-likelihood Gram matrix stayed indefinite after jitter escalation");
}

struct NlmlResult {
  double value = 0.0;
  Vector alpha;   // K^{-1} z
  Matrix Kinv;    // only filled when a gradient is requested
};

NlmlResult nlml_core(const kernels::KernelHyperparams& hp, const Matrix& B,
                     double noiseVar, const TrainingSet& data, bool wantInverse) {
  hp.validate();
  const int n = data.totalPoints();

  Vector z(n);
  int at = 0;
  for (const Vector& zd : data.values) {
    z.segment(at, zd.size()) = zd;
    at += static_cast<int>(zd.size());
  }

  Matrix Ky = block_matrix(data, B, [&](double a, double b) {
    return kernels::eval_kernel(hp, a - b);
  });
  Ky.diagonal().array() += noiseVar;

  Eigen::LLT<Matrix> llt = factor_with_jitter(Ky, hp.sigma2);

  NlmlResult out;
  out.alpha = llt.solve(z);
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
  logdet *= 2.0;
  out.value = 0.5 * z.dot(out.alpha) + 0.5 * logdet + 0.5 * n * kLog2Pi;
  if (wantInverse) out.Kinv = llt.solve(Matrix::Identity(n, n));
  return out;
}

}  // namespace

int TrainingSet::totalPoints() const {
  int n = 0;
  for (const auto& u : inputs) n += static_cast<int>(u.size());
  return n;
}

void TrainingSet::validate() const {
  require(!inputs.empty() && inputs.size() == values.size(), ErrorCode::InvalidArgument,
          "training set needs aligned inputs and values for at least one target");
  for (std::size_t d = 0; d < inputs.size(); ++d) {
    require(inputs[d].size() >= 2, ErrorCode::InvalidArgument,
            "each target needs at least two training samples");
    require(inputs[d].size() == values[d].size(), ErrorCode::InvalidArgument,
            "per-target inputs and values must align");
    require(inputs[d].allFinite() && values[d].allFinite(), ErrorCode::InvalidArgument,
            "training samples must be finite");
  }
  require(std::isfinite(noiseVar) && noiseVar >= 0.0, ErrorCode::InvalidArgument,
          "noise variance must be non-negative");
}

double nlml(const kernels::KernelHyperparams& hp, const Matrix& B,
            const TrainingSet& data) {
  data.validate();
  require(B.rows() == data.targets() && B.cols() == data.targets(),
          ErrorCode::InvalidArgument,
          "coregionalization size must match the target count");
  return nlml_core(hp, B, data.noiseVar, data, /*wantInverse=*/false).value;
}

namespace detail {

int Objective::paramCount() const {
  return 2 + D * (D + 1) / 2 + (optimizeNoise ? 1 : 0);
}

Vector Objective::pack(const kernels::KernelHyperparams& hp, const Matrix& B,
                       double noiseVar) const {
  require(B.rows() == D && B.cols() == D, ErrorCode::InvalidArgument,
          "coregionalization size must match the target count");

  Matrix Bs = B;
  Bs.diagonal().array() += 1e-12;  // keep a PSD boundary factorizable
  Eigen::LLT<Matrix> llt(Bs);
  require(llt.info() == Eigen::Success, ErrorCode::InvalidArgument,
          "coregionalization init must be positive semidefinite");
  const Matrix L = llt.matrixL();

  Vector theta(paramCount());
  theta(0) = std::log(hp.sigma2);
  theta(1) = std::log(hp.ell);
  int at = 2;
  for (int r = 0; r < D; ++r) {
    for (int c = 0; c <= r; ++c) {
      theta(at++) = (r == c) ? std::log(L(r, c)) : L(r, c);
    }
  }
  if (optimizeNoise) theta(at) = std::log(std::max(noiseVar, 1e-12));
  return theta;
}

void Objective::unpack(const Vector& theta, kernels::KernelHyperparams* hp, Matrix* B,
                       double* noiseVar) const {
  require(theta.size() == paramCount(), ErrorCode::InvalidArgument,
          "parameter vector size mismatch");
  hp->family = family;
  hp->sigma2 = std::exp(theta(0));
  hp->ell = std::exp(theta(1));
  Matrix L = Matrix::Zero(D, D);
  int at = 2;
  for (int r = 0; r < D; ++r) {
    for (int c = 0; c <= r; ++c) {
      L(r, c) = (r == c) ? std::exp(theta(at)) : theta(at);
      ++at;
    }
  }
  *B = L * L.transpose();
  if (noiseVar) {
    *noiseVar = optimizeNoise ? std::exp(theta(at)) : data->noiseVar;
  }
}

double Objective::eval(const Vector& theta, Vector* grad) const {
  kernels::KernelHyperparams hp;
  Matrix B;
  double noiseVar = 0.0;
  unpack(theta, &hp, &B, &noiseVar);

  const NlmlResult res = nlml_core(hp, B, noiseVar, *data, grad != nullptr);
  if (!grad) return res.value;

  // d nlml / d theta = 1/2 tr(W dK/dtheta), W = K^{-1} - alpha alpha'.
  const Matrix W = res.Kinv - res.alpha * res.alpha.transpose();

  grad->resize(paramCount());
  const Matrix dK_dlogs2 = block_matrix(*data, B, [&](double a, double b) {
    return kernels::eval_kernel(hp, a - b);
  });
  (*grad)(0) = 0.5 * (W.array() * dK_dlogs2.array()).sum();

  const Matrix dK_dlogell = block_matrix(*data, B, [&](double a, double b) {
    return kernel_dlogell(hp, a - b);
  });
  (*grad)(1) = 0.5 * (W.array() * dK_dlogell.array()).sum();

  // T(d,e) = sum over the (d,e) block of W .* k(u,u'); then the gradient for
  // any dB is 1/2 sum_de dB(d,e) T(d,e).
  Matrix T = Matrix::Zero(D, D);
  {
    int rowAt = 0;
    for (int d = 0; d < D; ++d) {
      const Vector& ud = data->inputs[static_cast<std::size_t>(d)];
      int colAt = 0;
      for (int e = 0; e < D; ++e) {
        const Vector& ue = data->inputs[static_cast<std::size_t>(e)];
        double acc = 0.0;
        for (Eigen::Index i = 0; i < ud.size(); ++i) {
          for (Eigen::Index j = 0; j < ue.size(); ++j) {
            acc += W(rowAt + i, colAt + j) * kernels::eval_kernel(hp, ud(i) - ue(j));
          }
        }
        T(d, e) = acc;
        colAt += static_cast<int>(ue.size());
      }
      rowAt += static_cast<int>(ud.size());
    }
  }

  Matrix L = Matrix::Zero(D, D);
  {
    int at = 2;
    for (int r = 0; r < D; ++r) {
      for (int c = 0; c <= r; ++c) {
        L(r, c) = (r == c) ? std::exp(theta(at)) : theta(at);
        ++at;
      }
    }
  }
  int at = 2;
  for (int r = 0; r < D; ++r) {
    for (int c = 0; c <= r; ++c) {
      // dB = dL L' + L dL' with dL = E_rc (times L_rr for the log-diagonal).
      Matrix dL = Matrix::Zero(D, D);
      dL(r, c) = (r == c) ? L(r, c) : 1.0;
      const Matrix dB = dL * L.transpose() + L * dL.transpose();
      double acc = 0.0;
      for (int d = 0; d < D; ++d) {
        for (int e = 0; e < D; ++e) acc += dB(d, e) * T(d, e);
      }
      (*grad)(at++) = 0.5 * acc;
    }
  }
  if (optimizeNoise) {
    (*grad)(at) = 0.5 * noiseVar * W.trace();
  }
  return res.value;
}

}  // namespace detail

namespace {

struct LineSearchResult {
  double step = 0.0;
  double value = 0.0;
  Vector gradient;
  bool ok = false;
};

// Strong-Wolfe line search (bracket + zoom), c1 = 1e-4, c2 = 0.9.
LineSearchResult line_search(const detail::Objective& obj, const Vector& x,
                             const Vector& dir, double f0, const Vector& g0) {
  constexpr double c1 = 1e-4;
  constexpr double c2 = 0.9;
  const double slope0 = g0.dot(dir);
  LineSearchResult out;
  if (slope0 >= 0.0) return out;  // not a descent direction

  auto phi = [&](double a, Vector* g) { return obj.eval(x + a * dir, g); };

  auto zoom = [&](double lo, double flo, double hi) -> LineSearchResult {
    LineSearchResult r;
    for (int it = 0; it < 30; ++it) {
      const double a = 0.5 * (lo + hi);
      Vector g;
      double fa;
      try {
        fa = phi(a, &g);
      } catch (const Error&) {
        hi = a;
        continue;
      }
      if (fa > f0 + c1 * a * slope0 || fa >= flo) {
        hi = a;
        continue;
      }
      const double slope = g.dot(dir);
      if (std::abs(slope) <= -c2 * slope0) {
        r.step = a;
        r.value = fa;
        r.gradient = std::move(g);
        r.ok = true;
        return r;
      }
      if (slope * (hi - lo) >= 0.0) hi = lo;
      lo = a;
      flo = fa;
    }
    return r;
  };

  double prevA = 0.0, prevF = f0;
  double a = 1.0;
  for (int it = 0; it < 20; ++it) {
    Vector g;
    double fa;
    try {
      fa = phi(a, &g);
    } catch (const Error&) {
      // Step left the numerically feasible region; shrink hard.
      a = 0.5 * (prevA + a);
      continue;
    }
    if (fa > f0 + c1 * a * slope0 || (it > 0 && fa >= prevF)) {
      return zoom(prevA, prevF, a);
    }
    const double slope = g.dot(dir);
    if (std::abs(slope) <= -c2 * slope0) {
      out.step = a;
      out.value = fa;
      out.gradient = std::move(g);
      out.ok = true;
      return out;
    }
    if (slope >= 0.0) {
      return zoom(a, fa, prevA);
    }
    prevA = a;
    prevF = fa;
    a = std::min(2.0 * a, 50.0);
  }
  return out;
}

}  // namespace

TrainedModel train(const TrainingSet& data, kernels::KernelFamily family,
                   const TrainInit& init, const TrainOptions& opts) {
  data.validate();
  init.hyperparams.validate();
  require(init.hyperparams.family == family, ErrorCode::InvalidArgument,
          "init hyperparameters must use the requested kernel family");
  require(opts.maxIters >= 0, ErrorCode::InvalidArgument,
          "iteration budget must be non-negative");

  const int D = data.targets();
  detail::Objective obj{&data, family, opts.optimizeNoise, D};

  Matrix B0 = init.B.size() == 0 ? Matrix::Identity(D, D) : init.B;
  // Validates symmetry/PSD/diagonal up front.
  (void)coupling::CoregionalizationMatrix(B0);

  Vector x = obj.pack(init.hyperparams, B0, data.noiseVar);
  Vector g(obj.paramCount());
  double f = obj.eval(x, &g);

  Vector bestX = x;
  double bestF = f;

  Matrix H = Matrix::Identity(obj.paramCount(), obj.paramCount());
  bool converged = g.lpNorm<Eigen::Infinity>() < opts.gradTol;
  int iter = 0;

  while (!converged && iter < opts.maxIters) {
    ++iter;
    const Vector dir = -(H * g);
    LineSearchResult ls = line_search(obj, x, dir, f, g);
    if (!ls.ok) break;  // no acceptable step; report best-so-far

    const Vector s = ls.step * dir;
    const Vector y = ls.gradient - g;
    const double relChange = std::abs(f - ls.value) / std::max(1.0, std::abs(f));

    x += s;
    f = ls.value;
    g = ls.gradient;
    if (f < bestF) {
      bestF = f;
      bestX = x;
    }

    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Matrix I = Matrix::Identity(obj.paramCount(), obj.paramCount());
      const Matrix V = I - rho * (s * y.transpose());
      H = V * H * V.transpose() + rho * (s * s.transpose());
    }

    if (g.lpNorm<Eigen::Infinity>() < opts.gradTol || relChange < opts.relTol) {
      converged = true;
    }
  }

  TrainedModel model;
  double noiseVar = data.noiseVar;
  obj.unpack(bestX, &model.hyperparams, &model.B, &noiseVar);
  model.converged = converged;
  model.iterations = iter;
  model.finalNlml = bestF;

  // The likelihood only constrains the product sigma2 * B, so normalize the
  // mean coregionalization diagonal to one and fold the scale into sigma2.
  const double scale = model.B.diagonal().mean();
  require(scale > 0.0, ErrorCode::Numerical,
          "training collapsed the coregionalization diagonal");
  model.B /= scale;
  model.hyperparams.sigma2 *= scale;

  model.cssm = kernels::to_cssm(model.hyperparams, opts.rbfOrder);
  model.ssm = kernels::discretize(model.cssm, opts.Ts);
  return model;
}

}  // namespace stjpda::training
