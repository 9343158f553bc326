#pragma once

// Unconstrained minimizers used by the fitter: an adaptive Nelder-Mead
// simplex and a BFGS polish with backtracking. Objectives return +inf to
// reject a point.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace nbbp::optim {

struct NelderMeadOptions {
  int max_eval = 5000;
  double diameter_tol = 1e-8;
  Eigen::VectorXd initial_step;  // per coordinate; empty means 0.1
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  double diameter = std::numeric_limits<double>::infinity();
  int n_eval = 0;
  bool converged = false;  // diameter below tolerance within the budget
};

/// Largest infinity-norm distance from the best vertex.
inline double simplex_diameter(const std::vector<Eigen::VectorXd> &v) {
  double d = 0.0;
  for (std::size_t i = 1; i < v.size(); ++i) d = std::max(d, (v[i] - v[0]).cwiseAbs().maxCoeff());
  return d;
}

/// Nelder-Mead with dimension-adaptive coefficients (Gao and Han).
template <class F>
NelderMeadResult nelder_mead(F &&f, const Eigen::VectorXd &x0, const NelderMeadOptions &opt) {
  const Eigen::Index n = x0.size();
  const double dn = static_cast<double>(n);
  const double rho = 1.0, chi = 1.0 + 2.0 / dn, gam = 0.75 - 1.0 / (2.0 * dn), sig = 1.0 - 1.0 / dn;

  NelderMeadResult res;
  auto eval = [&](const Eigen::VectorXd &x) {
    ++res.n_eval;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(n + 1), x0);
  std::vector<double> fv(static_cast<std::size_t>(n + 1));
  fv[0] = eval(x0);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double step = opt.initial_step.size() == n ? opt.initial_step[j] : 0.1;
    v[static_cast<std::size_t>(j + 1)][j] += step;
    fv[static_cast<std::size_t>(j + 1)] = eval(v[static_cast<std::size_t>(j + 1)]);
  }

  std::vector<std::size_t> order(v.size());
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    std::vector<Eigen::VectorXd> v2;
    std::vector<double> f2;
    for (std::size_t i : order) {
      v2.push_back(v[i]);
      f2.push_back(fv[i]);
    }
    v.swap(v2);
    fv.swap(f2);
  };

  sort_simplex();
  while (true) {
    res.diameter = simplex_diameter(v);
    if (res.diameter < opt.diameter_tol) {
      res.converged = true;
      break;
    }
    if (res.n_eval >= opt.max_eval) break;

    const std::size_t w = static_cast<std::size_t>(n);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < w; ++i) c += v[i];
    c /= dn;

    const Eigen::VectorXd xr = c + rho * (c - v[w]);
    const double fr = eval(xr);
    if (fr < fv[0]) {
      const Eigen::VectorXd xe = c + chi * (xr - c);
      const double fe = eval(xe);
      if (fe < fr) {
        v[w] = xe;
        fv[w] = fe;
      } else {
        v[w] = xr;
        fv[w] = fr;
      }
    } else if (fr < fv[w - 1]) {
      v[w] = xr;
      fv[w] = fr;
    } else {
      bool shrink = false;
      if (fr < fv[w]) {
        const Eigen::VectorXd xc = c + gam * (xr - c);
        const double fc = eval(xc);
        if (fc <= fr) {
          v[w] = xc;
          fv[w] = fc;
        } else {
          shrink = true;
        }
      } else {
        const Eigen::VectorXd xc = c - gam * (c - v[w]);
        const double fc = eval(xc);
        if (fc < fv[w]) {
          v[w] = xc;
          fv[w] = fc;
        } else {
          shrink = true;
        }
      }
      if (shrink) {
        for (std::size_t i = 1; i <= w; ++i) {
          v[i] = v[0] + sig * (v[i] - v[0]);
          fv[i] = eval(v[i]);
        }
      }
    }
    sort_simplex();
  }
  res.x = v[0];
  res.f = fv[0];
  return res;
}

struct BfgsOptions {
  int max_iter = 100;
  double grad_tol = 1e-7;  // on the infinity norm of the supplied gradient
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;
  int n_iter = 0;
  int n_eval = 0;
};

/// BFGS from x0 with inverse-Hessian seed H0. `fg(x, g)` returns the
/// objective and fills g; a non-finite return rejects the point. The
/// returned point never has a larger objective than x0.
template <class FG>
BfgsResult bfgs(FG &&fg, const Eigen::VectorXd &x0, const Eigen::MatrixXd &H0, const BfgsOptions &opt) {
  BfgsResult res;
  const Eigen::Index n = x0.size();
  Eigen::VectorXd x = x0, g(n), g_new(n);
  double fx = fg(x, g);
  ++res.n_eval;
  Eigen::MatrixXd H = H0;
  res.x = x;
  res.f = fx;
  res.grad = g;
  if (!std::isfinite(fx)) return res;

  for (int it = 0; it < opt.max_iter; ++it) {
    res.n_iter = it;
    if (g.cwiseAbs().maxCoeff() < opt.grad_tol) break;
    Eigen::VectorXd p = -H * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      H = Eigen::MatrixXd::Identity(n, n);
      p = -g;
      slope = g.dot(p);
    }
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * p;
      f_new = fg(x_new, g_new);
      ++res.n_eval;
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double r = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      H = (I - r * s * y.transpose()) * H * (I - r * y * s.transpose()) + r * s * s.transpose();
    }
    const bool stalled = fx - f_new <= 1e-15 * std::max(1.0, std::fabs(fx)) &&
                         s.cwiseAbs().maxCoeff() < 1e-12;
    x = x_new;
    fx = f_new;
    g = g_new;
    res.n_iter = it + 1;
    if (stalled) break;
  }
  res.x = x;
  res.f = fx;
  res.grad = g;
  return res;
}

}  // namespace nbbp::optim
