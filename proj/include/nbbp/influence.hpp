#pragma once

// Local influence under case-weight, response and covariate perturbations:
// the mixed-partial matrix Nabla, B = Nabla' (-L)^-1 Nabla, normal
// curvatures C_i = 2|b_ii|, the direction of maximum curvature, and
// case-deletion relative changes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nbbp/errors.hpp"
#include "nbbp/fit.hpp"
#include "nbbp/likelihood.hpp"
#include "nbbp/numdiff.hpp"

namespace nbbp {

enum class PerturbationKind { CaseWeight, Response, Covariate };

struct PerturbationScheme {
  PerturbationKind kind = PerturbationKind::CaseWeight;
  Eigen::Index covariate = 0;   // column of X, covariate scheme only
  std::optional<double> scale;  // defaults to the sample SD of the perturbed quantity

  static PerturbationScheme case_weight() { return {}; }
  static PerturbationScheme response(std::optional<double> s = std::nullopt) {
    return {PerturbationKind::Response, 0, s};
  }
  static PerturbationScheme covariate_of(Eigen::Index k, std::optional<double> s = std::nullopt) {
    return {PerturbationKind::Covariate, k, s};
  }

  std::string name() const {
    switch (kind) {
      case PerturbationKind::CaseWeight: return "case-weight";
      case PerturbationKind::Response: return "response";
      case PerturbationKind::Covariate: return "covariate(" + std::to_string(covariate) + ")";
    }
    return "";
  }

  /// Unperturbed value omega_0 of each component.
  double omega0() const { return kind == PerturbationKind::CaseWeight ? 1.0 : 0.0; }
};

namespace detail {

inline double sample_sd(const std::vector<double> &x) {
  if (x.size() < 2) return std::nan("");
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

}  // namespace detail

/// Validates the scheme against `data` and returns the perturbation scale
/// (1 for case weights).
inline double perturbation_scale(const PerturbationScheme &s, const SurvivalDataset &data) {
  if (s.scale && !(*s.scale > 0.0 && std::isfinite(*s.scale))) {
    throw DomainError("perturbation scale must be positive and finite");
  }
  switch (s.kind) {
    case PerturbationKind::CaseWeight: return 1.0;
    case PerturbationKind::Response: {
      if (s.scale) return *s.scale;
      std::vector<double> ev;
      for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (data.delta[static_cast<std::size_t>(i)] == 1) ev.push_back(data.t[i]);
      }
      const double sd = detail::sample_sd(ev);
      if (!(sd > 0.0)) throw DomainError("response perturbation: event times have no spread");
      return sd;
    }
    case PerturbationKind::Covariate: {
      if (s.covariate < 0 || s.covariate >= data.n_coef()) {
        throw DomainError("covariate perturbation: column index out of range");
      }
      if (s.scale) return *s.scale;
      const Eigen::VectorXd col = data.X.col(s.covariate);
      const double sd = detail::sample_sd(std::vector<double>(col.data(), col.data() + col.size()));
      if (!(sd > 0.0)) {
        throw DomainError("covariate perturbation: column '" + data.names[static_cast<std::size_t>(s.covariate)] +
                          "' has no spread");
      }
      return sd;
    }
  }
  return 1.0;
}

/// Log-likelihood under perturbation `omega`; equals log_lik at omega_0.
inline double perturbed_loglik(const CureParams &params, const SurvivalDataset &data, const PerturbationScheme &scheme,
                               const Eigen::VectorXd &omega) {
  if (omega.size() != data.size()) throw DimensionMismatch("perturbed_loglik: omega must have one entry per case");
  if (!omega.allFinite()) throw DomainError("perturbed_loglik: omega must be finite");
  const double s = perturbation_scale(scheme, data);
  switch (scheme.kind) {
    case PerturbationKind::CaseWeight: {
      const Eigen::VectorXd terms = case_log_liks(params, data);
      std::vector<double> w(static_cast<std::size_t>(terms.size()));
      for (Eigen::Index i = 0; i < terms.size(); ++i) {
        if (omega[i] == 0.0) {
          w[static_cast<std::size_t>(i)] = 0.0;
          continue;
        }
        if (!std::isfinite(terms[i])) return kLogLikRejected;
        w[static_cast<std::size_t>(i)] = omega[i] * terms[i];
      }
      return pairwise_sum(w);
    }
    case PerturbationKind::Response: {
      SurvivalDataset d = data;
      for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d.delta[static_cast<std::size_t>(i)] != 1) continue;
        d.t[i] += omega[i] * s;
        if (!(d.t[i] > 0.0)) return kLogLikRejected;
      }
      return log_lik(params, d);
    }
    case PerturbationKind::Covariate: {
      SurvivalDataset d = data;
      d.X.col(scheme.covariate) += omega * s;
      return log_lik(params, d);
    }
  }
  return kLogLikRejected;
}

/// Free-parameter positions that carry curvature: all of them for an
/// interior maximum, all but phi on the boundary.
inline std::vector<Eigen::Index> active_indices(const FitResult &fit) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < fit.layout.size(); ++j) {
    if (fit.status == FitStatus::Boundary && j == fit.layout.phi_index()) continue;
    idx.push_back(j);
  }
  return idx;
}

/// Mixed partials d^2 l / d theta_j d omega_i at (theta_hat, omega_0): one
/// row per free parameter, one column per case. Only case i depends on
/// omega_i, so each column differences that case's contribution. Rows of
/// coordinates pinned at the boundary are zero.
inline Eigen::MatrixXd nabla_matrix(const FitResult &fit, const SurvivalDataset &data,
                                    const PerturbationScheme &scheme) {
  require_maximum(fit);
  if (data.fingerprint() != fit.data_fingerprint) {
    throw MismatchedData("nabla_matrix: data differ from the data that were fitted");
  }
  const double s = perturbation_scale(scheme, data);
  const ParamLayout &l = fit.layout;
  const Eigen::VectorXd theta = l.pack(fit.estimates);
  const Eigen::Index k = theta.size(), n = data.size();
  const double hw = numdiff::hessian_step(scheme.omega0());

  // Case i's contribution with omega_i = omega_0 + dw.
  auto case_term = [&](Eigen::Index i, double eta, double alpha, const BetaPrimeLaw &bp, const Eigen::VectorXd &beta,
                       double dw) {
    const int d = data.delta[static_cast<std::size_t>(i)];
    double t = data.t[i];
    switch (scheme.kind) {
      case PerturbationKind::CaseWeight:
        return (scheme.omega0() + dw) * case_log_lik(t, d, eta, alpha, bp);
      case PerturbationKind::Response:
        if (d == 1) t += dw * s;
        if (!(t > 0.0)) return kLogLikRejected;
        return case_log_lik(t, d, eta, alpha, bp);
      case PerturbationKind::Covariate:
        return case_log_lik(t, d, eta + beta[scheme.covariate] * dw * s, alpha, bp);
    }
    return kLogLikRejected;
  };

  Eigen::MatrixXd nabla = Eigen::MatrixXd::Zero(k, n);
  Eigen::VectorXd tp = theta;
  for (Eigen::Index j : active_indices(fit)) {
    const double h = numdiff::exact_step(theta[j], numdiff::hessian_step(theta[j]));
    Eigen::MatrixXd g(n, 4);  // columns: (+h,+w) (+h,-w) (-h,+w) (-h,-w)
    for (int side = 0; side < 2; ++side) {
      tp[j] = theta[j] + (side == 0 ? h : -h);
      const CureParams p = l.unpack(tp);
      if (!p.valid()) throw DomainError("nabla_matrix: parameter step leaves the model at coordinate " + std::to_string(j));
      const BetaPrimeLaw bp(p.bp);
      const Eigen::VectorXd eta = data.X * p.beta;
      for (Eigen::Index i = 0; i < n; ++i) {
        g(i, 2 * side) = case_term(i, eta[i], p.alpha, bp, p.beta, hw);
        g(i, 2 * side + 1) = case_term(i, eta[i], p.alpha, bp, p.beta, -hw);
      }
    }
    tp[j] = theta[j];
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!g.row(i).allFinite()) {
        throw DomainError("nabla_matrix: non-finite perturbed log-likelihood for case " + std::to_string(i + 1));
      }
      nabla(j, i) = (g(i, 0) - g(i, 1) - g(i, 2) + g(i, 3)) / (4.0 * h * hw);
    }
  }
  return nabla;
}

enum class ParamBlock { All, Alpha, Xi, Beta };

inline std::string to_string(ParamBlock b) {
  switch (b) {
    case ParamBlock::All: return "all";
    case ParamBlock::Alpha: return "alpha";
    case ParamBlock::Xi: return "xi";
    case ParamBlock::Beta: return "beta";
  }
  return "";
}

inline ParamBlock parse_block(const std::string &s) {
  if (s == "all") return ParamBlock::All;
  if (s == "alpha") return ParamBlock::Alpha;
  if (s == "xi") return ParamBlock::Xi;
  if (s == "beta") return ParamBlock::Beta;
  throw DomainError("unknown parameter block '" + s + "' (expected all, alpha, xi or beta)");
}

/// Positions of the block's parameters in the fit's free-parameter vector.
inline std::vector<Eigen::Index> block_indices(const ParamLayout &l, ParamBlock b) {
  std::vector<Eigen::Index> idx;
  switch (b) {
    case ParamBlock::All:
      for (Eigen::Index j = 0; j < l.size(); ++j) idx.push_back(j);
      break;
    case ParamBlock::Alpha:
      if (!l.alpha_free()) throw DomainError("alpha block requested but alpha is fixed in this fit");
      idx.push_back(0);
      break;
    case ParamBlock::Xi:
      idx = {l.mu_index(), l.phi_index()};
      break;
    case ParamBlock::Beta:
      for (Eigen::Index j = 0; j < l.n_beta; ++j) idx.push_back(l.beta_offset() + j);
      break;
  }
  return idx;
}

struct InfluenceReport {
  PerturbationScheme scheme;
  ParamBlock block = ParamBlock::All;
  Eigen::MatrixXd B;
  Eigen::VectorXd C;
  double threshold = 0.0;             // (2/n) sum C_i
  std::vector<Eigen::Index> flagged;  // 0-based cases with C_i above the threshold
  Eigen::VectorXd d_max;              // unit; largest component positive
};

/// Subset curvature for `block`: the information inverse minus the
/// nuisance block's own inverse, sandwiched by Nabla.
inline InfluenceReport curvature_from_nabla(const FitResult &fit, const Eigen::MatrixXd &nabla,
                                            const PerturbationScheme &scheme, ParamBlock block) {
  const ParamLayout &l = fit.layout;
  if (nabla.rows() != l.size()) throw DimensionMismatch("curvature: Nabla has the wrong number of rows");
  const std::vector<Eigen::Index> act = active_indices(fit);
  const Eigen::Index k = static_cast<Eigen::Index>(act.size());
  Eigen::MatrixXd M(k, k);
  Eigen::MatrixXd D(k, nabla.cols());
  for (Eigen::Index a = 0; a < k; ++a) {
    D.row(a) = nabla.row(act[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < k; ++b) M(a, b) = fit.covariance(act[static_cast<std::size_t>(a)], act[static_cast<std::size_t>(b)]);
  }
  if (!M.allFinite()) throw NotPositiveDefinite("curvature: fit has no covariance matrix", {});
  if (block != ParamBlock::All) {
    const std::vector<Eigen::Index> in = block_indices(l, block);
    std::vector<Eigen::Index> nuis;  // positions within the active set
    bool any_in = false;
    for (Eigen::Index a = 0; a < k; ++a) {
      const bool member = std::find(in.begin(), in.end(), act[static_cast<std::size_t>(a)]) != in.end();
      any_in = any_in || member;
      if (!member) nuis.push_back(a);
    }
    if (!any_in) throw DomainError("curvature: every parameter of block " + to_string(block) + " is pinned");
    const Eigen::Index m = static_cast<Eigen::Index>(nuis.size());
    Eigen::MatrixXd info = M.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    info = 0.5 * (info + info.transpose()).eval();
    Eigen::MatrixXd i22(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) i22(a, b) = info(nuis[static_cast<std::size_t>(a)], nuis[static_cast<std::size_t>(b)]);
    }
    const Eigen::MatrixXd c22 = i22.ldlt().solve(Eigen::MatrixXd::Identity(m, m));
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) M(nuis[static_cast<std::size_t>(a)], nuis[static_cast<std::size_t>(b)]) -= c22(a, b);
    }
  }
  InfluenceReport r;
  r.scheme = scheme;
  r.block = block;
  r.B = D.transpose() * M * D;
  r.B = 0.5 * (r.B + r.B.transpose()).eval();
  r.C = 2.0 * r.B.diagonal().cwiseAbs();
  const Eigen::Index n = r.C.size();
  r.threshold = 2.0 * r.C.sum() / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (r.C[i] > r.threshold) r.flagged.push_back(i);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.B);
  Eigen::Index top = 0;
  es.eigenvalues().cwiseAbs().maxCoeff(&top);
  r.d_max = es.eigenvectors().col(top).normalized();
  Eigen::Index big = 0;
  r.d_max.cwiseAbs().maxCoeff(&big);
  if (r.d_max[big] < 0.0) r.d_max = -r.d_max;
  return r;
}

inline InfluenceReport curvature(const FitResult &fit, const SurvivalDataset &data, const PerturbationScheme &scheme,
                                 ParamBlock block = ParamBlock::All) {
  return curvature_from_nabla(fit, nabla_matrix(fit, data, scheme), scheme, block);
}

struct RelativeChange {
  std::string name;
  double estimate = 0.0;
  double estimate_deleted = 0.0;
  double rc_estimate = 0.0;  // percent
  double se = 0.0;
  double se_deleted = 0.0;
  double rc_se = 0.0;        // percent
  double p_value_deleted = std::nan("");  // regression coefficients only
};

struct CaseDeletion {
  std::vector<Eigen::Index> cases;  // 0-based
  FitStatus status = FitStatus::Failed;
  std::string message;
  std::vector<RelativeChange> rows;
};

inline double relative_change_pct(double full, double deleted) { return 100.0 * std::fabs((full - deleted) / full); }

/// Refits without `cases`, warm-started at the full-data estimate.
inline CaseDeletion case_deletion_rc(const FitResult &fit, const SurvivalDataset &data,
                                     const std::vector<Eigen::Index> &cases, const FitOptions &opt = {}) {
  require_maximum(fit);
  const std::set<Eigen::Index> uniq(cases.begin(), cases.end());
  if (uniq.size() != cases.size()) throw DomainError("case_deletion_rc: repeated case index");
  if (static_cast<Eigen::Index>(cases.size()) >= data.size() - fit.k) {
    throw DomainError("case_deletion_rc: too many cases deleted for the number of parameters");
  }
  CaseDeletion out;
  out.cases = cases;
  FitResult refit = fit;
  if (!cases.empty()) {
    try {
      refit = fit_ml(data.without(cases), fit.family, fit.estimates, fit.seed, opt);
    } catch (const NonConvergence &e) {
      out.message = e.what();
      return out;
    }
  }
  out.status = refit.status;
  out.message = refit.message;
  const Eigen::Index off = fit.layout.beta_offset();
  for (Eigen::Index j = 0; j < fit.k; ++j) {
    RelativeChange rc;
    rc.name = fit.names[static_cast<std::size_t>(j)];
    rc.estimate = fit.theta[j];
    rc.estimate_deleted = refit.theta[j];
    // At a boundary maximum phi estimates zero, so its relative change is undefined.
    const bool pinned = fit.status == FitStatus::Boundary && j == fit.layout.phi_index();
    rc.rc_estimate = pinned ? std::nan("") : relative_change_pct(rc.estimate, rc.estimate_deleted);
    rc.se = fit.se[j];
    rc.se_deleted = refit.se[j];
    rc.rc_se = relative_change_pct(rc.se, rc.se_deleted);
    if (j >= off && rc.se_deleted > 0.0) rc.p_value_deleted = wald_p_value(rc.estimate_deleted / rc.se_deleted);
    out.rows.push_back(rc);
  }
  return out;
}

/// One deletion analysis per set; a failed refit is reported in its entry.
inline std::vector<CaseDeletion> case_deletion_rc(const FitResult &fit, const SurvivalDataset &data,
                                                  const std::vector<std::vector<Eigen::Index>> &sets,
                                                  const FitOptions &opt = {}) {
  std::vector<CaseDeletion> out;
  out.reserve(sets.size());
  for (const auto &s : sets) out.push_back(case_deletion_rc(fit, data, s, opt));
  return out;
}

}  // namespace nbbp
