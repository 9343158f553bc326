#pragma once

// Central finite differences with per-coordinate steps
// h_j = eps^(1/3) max(|x_j|, 1) for gradients and eps^(1/4) max(|x_j|, 1)
// for Hessians.

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "nbbp/errors.hpp"

namespace nbbp::numdiff {

inline double gradient_step(double x) {
  static const double kScale = std::cbrt(std::numeric_limits<double>::epsilon());
  return kScale * std::max(std::fabs(x), 1.0);
}

inline double hessian_step(double x) {
  static const double kScale = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  return kScale * std::max(std::fabs(x), 1.0);
}

// Forces x + h to be exactly representable so the realized step is h.
inline double exact_step(double x, double h) {
  volatile double xh = x + h;
  return xh - x;
}

namespace detail {
inline double checked(double v, Eigen::Index j) {
  if (!std::isfinite(v)) {
    throw DomainError("non-finite objective in the differencing neighborhood of coordinate " +
                      std::to_string(j));
  }
  return v;
}
}  // namespace detail

template <class F>
Eigen::VectorXd central_gradient(F &&f, const Eigen::VectorXd &x) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = exact_step(x[j], gradient_step(x[j]));
    xp[j] = x[j] + h;
    const double fp = detail::checked(f(xp), j);
    xp[j] = x[j] - h;
    const double fm = detail::checked(f(xp), j);
    xp[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Symmetrized Hessian: three-point second differences on the diagonal and
/// the four-point cross stencil off it.
template <class F>
Eigen::MatrixXd central_hessian(F &&f, const Eigen::VectorXd &x) {
  const Eigen::Index k = x.size();
  Eigen::VectorXd h(k);
  for (Eigen::Index j = 0; j < k; ++j) h[j] = exact_step(x[j], hessian_step(x[j]));
  const double f0 = detail::checked(f(x), -1);
  Eigen::MatrixXd H(k, k);
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < k; ++j) {
    xp[j] = x[j] + h[j];
    const double fp = detail::checked(f(xp), j);
    xp[j] = x[j] - h[j];
    const double fm = detail::checked(f(xp), j);
    xp[j] = x[j];
    H(j, j) = (fp - 2.0 * f0 + fm) / (h[j] * h[j]);
    for (Eigen::Index l = 0; l < j; ++l) {
      double acc = 0.0;
      for (int sj : {1, -1}) {
        for (int sl : {1, -1}) {
          xp[j] = x[j] + sj * h[j];
          xp[l] = x[l] + sl * h[l];
          acc += sj * sl * detail::checked(f(xp), j);
        }
      }
      xp[j] = x[j];
      xp[l] = x[l];
      H(j, l) = H(l, j) = acc / (4.0 * h[j] * h[l]);
    }
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace nbbp::numdiff
