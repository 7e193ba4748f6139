#pragma once

// Thin wrapper over Eigen's MINPACK-style Levenberg-Marquardt with a
// central-difference Jacobian.

#include <functional>

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "robomag/core.hpp"

namespace robomag {

using ResidualFn = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& residuals)>;

struct LsqOptions {
  int max_evaluations = 4000;
  double ftol = 1e-14;
  double xtol = 1e-14;
  /// Relative finite-difference step (0 = machine-precision default).
  double epsfcn = 0.0;
};

struct LsqResult {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  double cost = 0.0;  // sum of squared residuals
  int status = 0;     // Eigen LevenbergMarquardtSpace::Status
  bool converged = false;

  double rms() const { return residuals.size() ? std::sqrt(cost / static_cast<double>(residuals.size())) : 0.0; }

  /// s^2 (J^T J)^-1 with s^2 = cost / (n - p); empty when J^T J is singular.
  Eigen::MatrixXd covariance() const {
    const auto n = residuals.size(), p = params.size();
    const Eigen::MatrixXd jtj = jacobian.transpose() * jacobian;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    if (!lu.isInvertible() || n <= p) return {};
    return cost / static_cast<double>(n - p) * lu.inverse();
  }
};

namespace detail {

struct LsqFunctor {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  const ResidualFn* fn;
  int n_in;
  int n_out;

  int inputs() const { return n_in; }
  int values() const { return n_out; }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    (*fn)(x, f);
    return f.allFinite() ? 0 : -1;
  }
};

}  // namespace detail

/// Minimise sum(residuals^2) starting from `x0`. `n_residuals` must match the
/// size written by `fn`.
inline LsqResult least_squares(const ResidualFn& fn, const Eigen::VectorXd& x0, int n_residuals,
                               const LsqOptions& opt = {}) {
  detail::LsqFunctor functor{&fn, static_cast<int>(x0.size()), n_residuals};
  Eigen::NumericalDiff<detail::LsqFunctor, Eigen::Central> numdiff(functor, opt.epsfcn);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<detail::LsqFunctor, Eigen::Central>> lm(numdiff);
  lm.parameters.maxfev = opt.max_evaluations;
  lm.parameters.ftol = opt.ftol;
  lm.parameters.xtol = opt.xtol;

  LsqResult out;
  out.params = x0;
  const auto status = lm.minimize(out.params);
  out.status = static_cast<int>(status);
  out.residuals.resize(n_residuals);
  fn(out.params, out.residuals);
  out.cost = out.residuals.squaredNorm();
  out.jacobian.resize(n_residuals, x0.size());
  numdiff.df(out.params, out.jacobian);
  using namespace Eigen::LevenbergMarquardtSpace;
  out.converged = out.params.allFinite() && std::isfinite(out.cost) &&
                  (status == RelativeReductionTooSmall || status == RelativeErrorTooSmall ||
                   status == RelativeErrorAndReductionTooSmall || status == CosinusTooSmall ||
                   status == FtolTooSmall || status == XtolTooSmall || status == GtolTooSmall);
  return out;
}

}  // namespace robomag
