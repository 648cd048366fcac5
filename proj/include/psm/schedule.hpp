#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace psm {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

using Vector2d = Vec2<double>;
using Matrix2Xd = Eigen::Matrix<double, 2, Eigen::Dynamic>;

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class ScheduleKind { Linear };

// Variance-preserving noise rate b(t) = c * t on t in [0, 1].
template <typename Scalar = double>
struct Schedule {
  ScheduleKind kind = ScheduleKind::Linear;
  Scalar c = Scalar(10);

  Scalar rate(Scalar t) const { return c * t; }

  // B(t) = integral of b over [0, t], closed form.
  Scalar integrated_rate(Scalar t) const { return c * t * t / Scalar(2); }
};

template <typename Scalar = double>
struct Marginal {
  Scalar mu;
  Scalar sigma;
};

template <typename Scalar>
Marginal<Scalar> marginal(const Schedule<Scalar>& sched, Scalar t) {
  if (!(t >= Scalar(0) && t <= Scalar(1))) {
    throw DomainError("marginal: t must lie in [0, 1], got " + std::to_string(double(t)));
  }
  const Scalar big_b = sched.integrated_rate(t);
  // sqrt(1 - e^{-B}) via expm1 keeps small-t sigma accurate.
  return {std::exp(-big_b / Scalar(2)), std::sqrt(-std::expm1(-big_b))};
}

template <typename Scalar>
Vec2<Scalar> forward_sample(const Schedule<Scalar>& sched, const Vec2<Scalar>& x0, Scalar t,
                            const Vec2<Scalar>& eps) {
  const auto m = marginal(sched, t);
  return m.mu * x0 + m.sigma * eps;
}

// Column-wise forward_sample with a per-column time.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, Eigen::Dynamic> forward_sample(
    const Schedule<Scalar>& sched, const Eigen::Matrix<Scalar, 2, Eigen::Dynamic>& x0,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& t,
    const Eigen::Matrix<Scalar, 2, Eigen::Dynamic>& eps) {
  Eigen::Matrix<Scalar, 2, Eigen::Dynamic> out(2, x0.cols());
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    const auto m = marginal(sched, t(j));
    out.col(j) = m.mu * x0.col(j) + m.sigma * eps.col(j);
  }
  return out;
}

// Regression target for a score-predicting head: -eps / sigma.
template <typename Scalar>
Vec2<Scalar> score_target(Scalar sigma, const Vec2<Scalar>& eps) {
  if (!(sigma > Scalar(0))) {
    throw DomainError("score_target: sigma must be positive (t = 0 is singular)");
  }
  return -eps / sigma;
}

// Noise-prediction target; the identity on eps.
template <typename Scalar>
Vec2<Scalar> noise_target(const Vec2<Scalar>& eps) {
  return eps;
}

// Data distribution N(mean, var * I). Diffuses to N(mean * mu_t, (var mu_t^2 + sigma_t^2) I).
template <typename Scalar = double>
struct GaussianOracle {
  Vec2<Scalar> mean = Vec2<Scalar>::Zero();
  Scalar var = Scalar(1);

  Scalar diffused_var(const Marginal<Scalar>& m) const {
    return var * m.mu * m.mu + m.sigma * m.sigma;
  }

  Scalar log_density(const Schedule<Scalar>& sched, const Vec2<Scalar>& x, Scalar t) const {
    const auto m = marginal(sched, t);
    const Scalar v = diffused_var(m);
    const Scalar pi = Scalar(3.141592653589793238462643383279502884L);
    return -(x - mean * m.mu).squaredNorm() / (Scalar(2) * v) - std::log(Scalar(2) * pi * v);
  }
};

template <typename Scalar>
Vec2<Scalar> gaussian_score(const GaussianOracle<Scalar>& oracle, const Schedule<Scalar>& sched,
                            const Vec2<Scalar>& x, Scalar t) {
  if (!(oracle.var > Scalar(0))) {
    throw DomainError("gaussian_score: oracle variance must be positive");
  }
  const auto m = marginal(sched, t);
  return -(x - oracle.mean * m.mu) / oracle.diffused_var(m);
}

template <typename Scalar>
using ScoreField = std::function<Vec2<Scalar>(const Vec2<Scalar>&, Scalar)>;

// Residual of the score evolution PDE implied by the probability-flow ODE
//
//   ds/dt = 1/2 b grad(tr J) + 1/2 b grad[(x + s) . s],   J = ds/dx,
//
// where grad[(x + s) . s] = J (x + s) + (I + J) s for a gradient field (J symmetric).
// All derivatives are central differences with step h. Returns the Euclidean norm.
template <typename Scalar>
Scalar score_pde_residual(const ScoreField<Scalar>& field, const Schedule<Scalar>& sched,
                          const Vec2<Scalar>& x, Scalar t, Scalar h) {
  using M2 = Eigen::Matrix<Scalar, 2, 2>;
  auto jacobian = [&](const Vec2<Scalar>& at) {
    M2 jac;
    for (int k = 0; k < 2; ++k) {
      Vec2<Scalar> e = Vec2<Scalar>::Zero();
      e(k) = h;
      jac.col(k) = (field(at + e, t) - field(at - e, t)) / (Scalar(2) * h);
    }
    return jac;
  };

  const Vec2<Scalar> s = field(x, t);
  const M2 jac = jacobian(x);

  Vec2<Scalar> grad_trace;
  for (int k = 0; k < 2; ++k) {
    Vec2<Scalar> e = Vec2<Scalar>::Zero();
    e(k) = h;
    grad_trace(k) = (jacobian(x + e).trace() - jacobian(x - e).trace()) / (Scalar(2) * h);
  }

  const Vec2<Scalar> ds_dt = (field(x, t + h) - field(x, t - h)) / (Scalar(2) * h);
  const Scalar half_b = sched.rate(t) / Scalar(2);
  const Vec2<Scalar> transport = jac * (x + s) + (M2::Identity() + jac) * s;
  return (ds_dt - half_b * grad_trace - half_b * transport).norm();
}

}  // namespace psm
