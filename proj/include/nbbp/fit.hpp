#pragma once

// Maximum-likelihood fitting on the unconstrained scale
//   z = (alpha, ln mu, ln phi, beta)
// by a multi-start Nelder-Mead search followed by a BFGS polish, with
// standard errors from the observed information, AIC/BIC and Wald tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nbbp/dataset.hpp"
#include "nbbp/errors.hpp"
#include "nbbp/likelihood.hpp"
#include "nbbp/numdiff.hpp"
#include "nbbp/optim.hpp"
#include "nbbp/rng.hpp"
#include "nbbp/special_fn.hpp"

namespace nbbp {

enum class Family { NBBP, FixedAlpha, MBP, Promotion };

struct FamilySpec {
  Family kind = Family::NBBP;
  double alpha = 0.0;  // used by FixedAlpha only

  static FamilySpec nbbp() { return {Family::NBBP, 0.0}; }
  static FamilySpec mbp() { return {Family::MBP, -1.0}; }
  static FamilySpec promotion() { return {Family::Promotion, 0.0}; }
  static FamilySpec fixed(double alpha) {
    if (!std::isfinite(alpha)) throw DomainError("fixed alpha must be finite");
    return {Family::FixedAlpha, alpha};
  }

  std::optional<double> fixed_alpha() const {
    switch (kind) {
      case Family::NBBP: return std::nullopt;
      case Family::MBP: return -1.0;
      case Family::Promotion: return 0.0;
      case Family::FixedAlpha: return alpha;
    }
    return std::nullopt;
  }

  std::string name() const {
    switch (kind) {
      case Family::NBBP: return "nbbp";
      case Family::MBP: return "mbp";
      case Family::Promotion: return "promotion";
      case Family::FixedAlpha: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "fixed-alpha=%.17g", alpha);
        return buf;
      }
    }
    return "nbbp";
  }

  /// Accepts nbbp, mbp, promotion or fixed-alpha=<value>.
  static FamilySpec parse(const std::string &s) {
    if (s == "nbbp") return nbbp();
    if (s == "mbp") return mbp();
    if (s == "promotion") return promotion();
    const std::string prefix = "fixed-alpha=";
    if (s.rfind(prefix, 0) == 0) {
      const std::string v = s.substr(prefix.size());
      std::size_t used = 0;
      double a = 0.0;
      try {
        a = std::stod(v, &used);
      } catch (const std::exception &) {
        used = 0;
      }
      if (used == 0 || used != v.size()) throw DomainError("unparseable fixed alpha '" + v + "'");
      return fixed(a);
    }
    throw DomainError("unknown family '" + s + "'");
  }
};

/// Below this value of phi a fit is examined as a maximum on the phi = 0 edge.
inline constexpr double kPhiBoundary = 1e-8;

/// Converged: interior stationary point with positive-definite information.
/// Boundary: maximum on the phi = 0 edge of the parameter space (the beta
/// prime law stays proper there); phi has no standard error.
enum class FitStatus { Converged, Boundary, Failed };

inline const char *to_string(FitStatus s) {
  switch (s) {
    case FitStatus::Converged: return "converged";
    case FitStatus::Boundary: return "boundary";
    case FitStatus::Failed: return "failed";
  }
  return "failed";
}

struct FitOptions {
  int n_starts = 5;
  int screen_evals = 600;     // per start
  int refine_evals = 20000;   // simplex budget after screening
  double diameter_tol = 1e-8;
  double grad_tol = 1e-5;
};

struct WaldTest {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
};

struct FitResult {
  CureParams estimates;
  FamilySpec family;
  ParamLayout layout;
  std::vector<std::string> names;  // one per free parameter
  Eigen::VectorXd theta;           // free parameters in natural units
  Eigen::VectorXd se;              // NaN where unavailable
  Eigen::MatrixXd covariance;      // inverse observed information
  double loglik = kLogLikRejected;
  double aic = 0.0;
  double bic = 0.0;
  int k = 0;
  Eigen::Index n = 0;
  std::vector<WaldTest> wald;
  bool converged = false;
  FitStatus status = FitStatus::Failed;
  double phi_boundary_slope = std::nan("");  // one-sided d loglik / d phi, boundary fits only
  int n_eval = 0;
  double grad_norm = std::numeric_limits<double>::infinity();
  double simplex_diameter = std::numeric_limits<double>::infinity();
  int best_start = 0;
  std::uint64_t seed = kDefaultSeed;
  std::uint64_t data_fingerprint = 0;
  std::string message;

  std::optional<double> fixed_alpha() const { return layout.fixed_alpha; }
};

/// Two-sided p-value under the standard normal reference.
inline double wald_p_value(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

inline WaldTest wald_test(const std::string &name, double estimate, double se) {
  if (!(se > 0.0)) throw DomainError("wald_test: standard error must be positive");
  const double z = estimate / se;
  return {name, estimate, se, z, wald_p_value(z)};
}

/// Tests for the regression coefficients only.
inline std::vector<WaldTest> wald_tests(const FitResult &fit) {
  std::vector<WaldTest> out;
  const Eigen::Index off = fit.layout.beta_offset();
  for (Eigen::Index j = 0; j < fit.layout.n_beta; ++j) {
    const double est = fit.theta[off + j];
    const double se = fit.se.size() > off + j ? fit.se[off + j] : std::nan("");
    const std::string &name = fit.names[static_cast<std::size_t>(off + j)];
    if (se > 0.0) {
      out.push_back(wald_test(name, est, se));
    } else {
      const double nan = std::nan("");
      out.push_back({name, est, se, nan, nan});
    }
  }
  return out;
}

namespace detail {

inline bool is_log_coordinate(const ParamLayout &l, Eigen::Index j) {
  return j == l.mu_index() || j == l.phi_index();
}

inline Eigen::VectorXd to_natural(const ParamLayout &l, const Eigen::VectorXd &z) {
  Eigen::VectorXd v = z;
  v[l.mu_index()] = std::exp(z[l.mu_index()]);
  v[l.phi_index()] = std::exp(z[l.phi_index()]);
  return v;
}

inline Eigen::VectorXd to_unconstrained(const ParamLayout &l, const Eigen::VectorXd &v) {
  Eigen::VectorXd z = v;
  z[l.mu_index()] = std::log(v[l.mu_index()]);
  z[l.phi_index()] = std::log(v[l.phi_index()]);
  return z;
}

/// Logistic regression of the censoring indicator on X by IRLS, with
/// coefficients clamped to a moderate range; a crude cure-fraction start.
inline Eigen::VectorXd censoring_logit(const SurvivalDataset &d) {
  const Eigen::Index n = d.size(), p = d.n_coef();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = 1.0 - d.delta[static_cast<std::size_t>(i)];
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  for (int it = 0; it < 25; ++it) {
    const Eigen::VectorXd eta = d.X * b;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = logistic(eta[i]);
      w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-10);
    }
    const Eigen::MatrixXd XtWX = d.X.transpose() * w.asDiagonal() * d.X;
    const Eigen::VectorXd step = XtWX.ldlt().solve(d.X.transpose() * (y - mu));
    if (!step.allFinite()) break;
    b = (b + step).cwiseMax(-10.0).cwiseMin(10.0);
    if (step.cwiseAbs().maxCoeff() < 1e-10) break;
  }
  return b;
}

inline double median_event_time(const SurvivalDataset &d) {
  std::vector<double> ev;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d.delta[static_cast<std::size_t>(i)] == 1) ev.push_back(d.t[i]);
  }
  std::sort(ev.begin(), ev.end());
  const std::size_t m = ev.size();
  return m % 2 == 1 ? ev[m / 2] : 0.5 * (ev[m / 2 - 1] + ev[m / 2]);
}

inline Eigen::VectorXd simplex_steps(const ParamLayout &l) {
  Eigen::VectorXd s = Eigen::VectorXd::Constant(l.size(), 0.2);
  if (l.alpha_free()) s[0] = 0.5;
  s[l.phi_index()] = 0.3;
  return s;
}

/// Starting points on the unconstrained scale.
inline std::vector<Eigen::VectorXd> starting_points(const SurvivalDataset &d, const ParamLayout &l,
                                                    const std::optional<CureParams> &init,
                                                    std::uint64_t seed, int n_starts) {
  if (init) {
    CureParams p = *init;
    if (l.fixed_alpha) p.alpha = *l.fixed_alpha;
    if (!p.valid()) throw DomainError("fit_ml: initial parameters are invalid");
    return {to_unconstrained(l, l.pack(p))};
  }
  CureParams base;
  base.alpha = l.fixed_alpha.value_or(0.1);
  base.bp = {std::max(median_event_time(d), 1e-8), 1.0};
  base.beta = censoring_logit(d);
  const Eigen::VectorXd z0 = to_unconstrained(l, l.pack(base));

  std::vector<Eigen::VectorXd> starts;
  if (l.alpha_free()) {
    for (double a0 : {-1.0, 0.1, 1.0, 2.0}) {
      Eigen::VectorXd z = z0;
      z[0] = a0;
      starts.push_back(z);
    }
  } else {
    starts.push_back(z0);
  }
  RandomStream rs(seed, 0x5354415254ULL);
  while (static_cast<int>(starts.size()) < std::max(n_starts, 1)) {
    Eigen::VectorXd z = z0;
    if (l.alpha_free()) z[0] = rs.uniform(-1.0, 3.0);
    z[l.mu_index()] += 0.5 * rs.normal();
    z[l.phi_index()] += 0.5 * rs.normal();
    for (Eigen::Index j = l.beta_offset(); j < z.size(); ++j) z[j] += 0.25 * rs.normal();
    starts.push_back(z);
  }
  starts.resize(static_cast<std::size_t>(std::max(n_starts, 1)));
  return starts;
}

/// Coordinates that move during polishing and enter the information
/// matrix: all of them, or all but phi for a boundary maximum.
struct ActiveSet {
  std::vector<Eigen::Index> idx;
  Eigen::VectorXd base;

  ActiveSet(const Eigen::VectorXd &v, const ParamLayout &l, bool pin_phi) : base(v) {
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (!(pin_phi && j == l.phi_index())) idx.push_back(j);
    }
  }
  Eigen::Index size() const { return static_cast<Eigen::Index>(idx.size()); }
  Eigen::VectorXd extract(const Eigen::VectorXd &v) const {
    Eigen::VectorXd u(size());
    for (Eigen::Index a = 0; a < size(); ++a) u[a] = v[idx[static_cast<std::size_t>(a)]];
    return u;
  }
  Eigen::VectorXd embed(const Eigen::VectorXd &u) const {
    Eigen::VectorXd v = base;
    for (Eigen::Index a = 0; a < size(); ++a) v[idx[static_cast<std::size_t>(a)]] = u[a];
    return v;
  }
};

/// Newton steps with the numerical Hessian over the active coordinates.
/// Near the optimum the log-likelihood changes by less than its own
/// rounding error, so a step is accepted when it reduces the gradient norm
/// without measurably lowering the log-likelihood.
inline Eigen::VectorXd newton_polish(const Eigen::VectorXd &v0, const ParamLayout &l,
                                     const SurvivalDataset &d, bool pin_phi, int &n_eval) {
  const ActiveSet as(v0, l, pin_phi);
  auto f = [&](const Eigen::VectorXd &u) {
    ++n_eval;
    return log_lik(as.embed(u), l, d);
  };
  Eigen::VectorXd u = as.extract(v0);
  try {
    double fu = f(u);
    Eigen::VectorXd g = numdiff::central_gradient(f, u);
    for (int it = 0; it < 4 && g.cwiseAbs().maxCoeff() > 1e-9; ++it) {
      const Eigen::LLT<Eigen::MatrixXd> llt(-numdiff::central_hessian(f, u));
      if (llt.info() != Eigen::Success) break;
      const Eigen::VectorXd cand = u + llt.solve(g);
      const double f_new = f(cand);
      if (!(f_new >= fu - 1e-9 * std::max(1.0, std::fabs(fu)))) break;
      const Eigen::VectorXd g_new = numdiff::central_gradient(f, cand);
      if (!(g_new.cwiseAbs().maxCoeff() < g.cwiseAbs().maxCoeff())) break;
      u = cand;
      fu = f_new;
      g = g_new;
    }
  } catch (const DomainError &) {
  }
  return as.embed(u);
}

}  // namespace detail

/// Fills SEs, covariance, information criteria, Wald tests and the status
/// for `theta`. A point with phi below kPhiBoundary is treated as a
/// candidate maximum on the phi = 0 edge: stationarity and curvature are
/// then checked over the remaining coordinates, and the one-sided slope in
/// phi must be nonpositive.
inline void finalize_fit(FitResult &r, const SurvivalDataset &data, double grad_tol = 1e-5,
                         double diameter_tol = 1e-8) {
  r.estimates = r.layout.unpack(r.theta);
  r.names = r.layout.names(data.names);
  r.k = static_cast<int>(r.layout.size());
  r.n = data.size();
  r.loglik = log_lik(r.estimates, data);
  r.aic = -2.0 * r.loglik + 2.0 * r.k;
  r.bic = -2.0 * r.loglik + r.k * std::log(static_cast<double>(r.n));
  r.data_fingerprint = data.fingerprint();
  r.se = Eigen::VectorXd::Constant(r.k, std::nan(""));
  r.covariance = Eigen::MatrixXd::Constant(r.k, r.k, std::nan(""));
  r.message.clear();

  const bool boundary = r.estimates.bp.phi < kPhiBoundary;
  const detail::ActiveSet as(r.theta, r.layout, boundary);
  auto f = [&](const Eigen::VectorXd &u) { return log_lik(as.embed(u), r.layout, data); };
  bool info_ok = false;
  bool slope_ok = true;
  try {
    const Eigen::VectorXd u = as.extract(r.theta);
    r.grad_norm = numdiff::central_gradient(f, u).cwiseAbs().maxCoeff();
    const Eigen::MatrixXd info = -numdiff::central_hessian(f, u);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0)) {
      const Eigen::VectorXd ev = es.eigenvalues();
      throw NotPositiveDefinite("observed information is not positive definite",
                                std::vector<double>(ev.data(), ev.data() + ev.size()));
    }
    Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(as.size(), as.size()));
    cov = 0.5 * (cov + cov.transpose()).eval();
    for (Eigen::Index a = 0; a < as.size(); ++a) {
      for (Eigen::Index b = 0; b < as.size(); ++b) {
        r.covariance(as.idx[static_cast<std::size_t>(a)], as.idx[static_cast<std::size_t>(b)]) = cov(a, b);
      }
      r.se[as.idx[static_cast<std::size_t>(a)]] = std::sqrt(cov(a, a));
    }
    info_ok = cov.diagonal().minCoeff() > 0.0 && cov.allFinite();
    if (boundary) {
      const double h = 1e-6;
      Eigen::VectorXd up = r.theta;
      up[r.layout.phi_index()] += h;
      r.phi_boundary_slope = (log_lik(up, r.layout, data) - r.loglik) / h;
      slope_ok = r.phi_boundary_slope <= grad_tol;
    }
  } catch (const NotPositiveDefinite &e) {
    r.message = e.what();
  } catch (const DomainError &e) {
    r.message = e.what();
  }
  r.wald = wald_tests(r);
  const bool grad_ok = r.grad_norm < grad_tol;
  const bool simplex_ok = r.simplex_diameter < diameter_tol;
  const bool stationary = info_ok && grad_ok && simplex_ok && slope_ok;
  r.status = !stationary ? FitStatus::Failed : boundary ? FitStatus::Boundary : FitStatus::Converged;
  r.converged = r.status == FitStatus::Converged;
  if (r.status == FitStatus::Boundary) {
    r.message = "maximum on the boundary phi -> 0; no standard error for phi";
  } else if (!stationary && r.message.empty()) {
    r.message = !grad_ok      ? "gradient norm above tolerance"
                : !simplex_ok ? "simplex did not contract below tolerance"
                : !slope_ok   ? "log-likelihood still increases in phi at the boundary"
                              : "standard errors unavailable";
  }
}

inline FitResult fit_ml(const SurvivalDataset &data, const FamilySpec &family = FamilySpec::nbbp(),
                        const std::optional<CureParams> &init = std::nullopt,
                        std::uint64_t seed = kDefaultSeed, const FitOptions &opt = {}) {
  data.validate();
  if (data.n_events() == 0) {
    throw DegenerateData("fit_ml: every observation is censored; the cure fraction is not identified");
  }
  FitResult r;
  r.family = family;
  r.seed = seed;
  r.layout = ParamLayout{family.fixed_alpha(), data.n_coef()};
  const ParamLayout &l = r.layout;
  if (data.size() <= l.size()) {
    throw DegenerateData("fit_ml: need more observations than free parameters");
  }

  auto objective = [&](const Eigen::VectorXd &z) {
    ++r.n_eval;
    const double ll = log_lik(detail::to_natural(l, z), l, data);
    return ll == kLogLikRejected ? std::numeric_limits<double>::infinity() : -ll;
  };

  // Screening.
  const auto starts = detail::starting_points(data, l, init, seed, opt.n_starts);
  optim::NelderMeadOptions screen;
  screen.max_eval = opt.screen_evals;
  screen.diameter_tol = 1e-4;
  screen.initial_step = detail::simplex_steps(l);
  optim::NelderMeadResult best;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const optim::NelderMeadResult nm = optim::nelder_mead(objective, starts[s], screen);
    if (nm.f < best.f) {
      best = nm;
      r.best_start = static_cast<int>(s);
    }
  }
  if (!std::isfinite(best.f)) {
    throw NonConvergence("fit_ml: no starting point gave a finite log-likelihood");
  }

  // Refinement with restarts until a restart brings no improvement.
  optim::NelderMeadOptions refine;
  refine.diameter_tol = opt.diameter_tol;
  refine.initial_step = 0.25 * detail::simplex_steps(l);
  int budget = opt.refine_evals;
  for (int restart = 0; restart < 5 && budget > 0; ++restart) {
    refine.max_eval = budget;
    const optim::NelderMeadResult nm = optim::nelder_mead(objective, best.x, refine);
    budget -= nm.n_eval;
    const double gain = best.f - nm.f;
    if (nm.f <= best.f) {
      best.x = nm.x;
      best.f = nm.f;
    }
    best.diameter = nm.diameter;
    if (!nm.converged || gain <= 1e-10 * std::max(1.0, std::fabs(best.f))) break;
    refine.initial_step *= 0.1;
  }
  r.simplex_diameter = best.diameter;

  // Quasi-Newton polish on z with the chain-rule gradient.
  auto fg = [&](const Eigen::VectorXd &z, Eigen::VectorXd &g) {
    const double f = objective(z);
    if (!std::isfinite(f)) return f;
    const Eigen::VectorXd v = detail::to_natural(l, z);
    try {
      const Eigen::VectorXd gn = numdiff::central_gradient(
          [&](const Eigen::VectorXd &u) {
            ++r.n_eval;
            return log_lik(u, l, data);
          },
          v);
      g = -gn;
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        if (detail::is_log_coordinate(l, j)) g[j] *= v[j];
      }
    } catch (const DomainError &) {
      return std::numeric_limits<double>::infinity();
    }
    return f;
  };
  Eigen::MatrixXd H0 = Eigen::MatrixXd::Identity(l.size(), l.size());
  try {
    const Eigen::VectorXd v = detail::to_natural(l, best.x);
    const CureParams p = l.unpack(v);
    const Eigen::MatrixXd info = observed_information(p, data, l);
    r.n_eval += static_cast<int>(1 + 2 * l.size() * l.size() + 2 * l.size());
    const Eigen::VectorXd gn = grad_log_lik(p, data, l);
    Eigen::MatrixXd info_z = info;
    for (Eigen::Index j = 0; j < l.size(); ++j) {
      const double dj = detail::is_log_coordinate(l, j) ? v[j] : 1.0;
      info_z.row(j) *= dj;
      info_z.col(j) *= dj;
      if (detail::is_log_coordinate(l, j)) info_z(j, j) -= gn[j] * v[j];
    }
    Eigen::LLT<Eigen::MatrixXd> llt(info_z);
    if (llt.info() == Eigen::Success) H0 = llt.solve(Eigen::MatrixXd::Identity(l.size(), l.size()));
  } catch (const Error &) {
  }
  optim::BfgsOptions bo;
  bo.grad_tol = 1e-3 * opt.grad_tol;
  const optim::BfgsResult polished = optim::bfgs(fg, best.x, H0, bo);
  const Eigen::VectorXd z_hat = polished.f <= best.f ? polished.x : best.x;

  const Eigen::VectorXd v_hat = detail::to_natural(l, z_hat);
  r.theta = detail::newton_polish(v_hat, l, data, v_hat[l.phi_index()] < kPhiBoundary, r.n_eval);
  finalize_fit(r, data, opt.grad_tol, opt.diameter_tol);
  return r;
}

/// Throws NonConvergence unless the fit converged.
inline const FitResult &require_converged(const FitResult &r) {
  if (!r.converged) throw NonConvergence("fit did not converge: " + r.message);
  return r;
}

/// Accepts interior maxima and maxima on the phi = 0 edge, where
/// diagnostics hold phi fixed.
inline const FitResult &require_maximum(const FitResult &r) {
  if (r.status == FitStatus::Boundary) return r;
  return require_converged(r);
}

struct ModelRank {
  std::size_t index = 0;  // position in the input list
  std::string family;
  int k = 0;
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  double delta_aic = 0.0;
  double delta_bic = 0.0;
};

struct ModelComparison {
  std::vector<ModelRank> by_aic;
  std::vector<ModelRank> by_bic;
};

inline ModelComparison model_compare(const std::vector<FitResult> &fits) {
  if (fits.empty()) throw DomainError("model_compare: no fits given");
  for (const FitResult &f : fits) {
    if (f.data_fingerprint != fits.front().data_fingerprint || f.n != fits.front().n) {
      throw MismatchedData("model_compare: fits were made on different datasets");
    }
  }
  std::vector<ModelRank> rows;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    rows.push_back({i, fits[i].family.name(), fits[i].k, fits[i].loglik, fits[i].aic, fits[i].bic, 0.0, 0.0});
  }
  double min_aic = rows.front().aic, min_bic = rows.front().bic;
  for (const ModelRank &m : rows) {
    min_aic = std::min(min_aic, m.aic);
    min_bic = std::min(min_bic, m.bic);
  }
  for (ModelRank &m : rows) {
    m.delta_aic = m.aic - min_aic;
    m.delta_bic = m.bic - min_bic;
  }
  ModelComparison out{rows, rows};
  std::stable_sort(out.by_aic.begin(), out.by_aic.end(), [](const ModelRank &a, const ModelRank &b) { return a.aic < b.aic; });
  std::stable_sort(out.by_bic.begin(), out.by_bic.end(), [](const ModelRank &a, const ModelRank &b) { return a.bic < b.bic; });
  return out;
}

}  // namespace nbbp
