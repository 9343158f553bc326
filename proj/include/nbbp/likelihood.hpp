#pragma once

// Right-censored log-likelihood
//   l(theta) = sum_i delta_i ln f_pop(t_i) + (1 - delta_i) ln S_pop(t_i)
// with numerical derivatives and the observed information matrix.
//
// Parameters are handled as vectors laid out (alpha, mu, phi, beta_0..beta_q);
// when alpha is held fixed it is dropped from the vector.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nbbp/betaprime.hpp"
#include "nbbp/cure_model.hpp"
#include "nbbp/dataset.hpp"
#include "nbbp/errors.hpp"
#include "nbbp/numdiff.hpp"
#include "nbbp/special_fn.hpp"

namespace nbbp {

inline constexpr double kLogLikRejected = -std::numeric_limits<double>::infinity();

struct ParamLayout {
  std::optional<double> fixed_alpha;
  Eigen::Index n_beta = 1;

  static ParamLayout full(Eigen::Index n_beta) { return {std::nullopt, n_beta}; }

  bool alpha_free() const { return !fixed_alpha.has_value(); }
  Eigen::Index mu_index() const { return alpha_free() ? 1 : 0; }
  Eigen::Index phi_index() const { return mu_index() + 1; }
  Eigen::Index beta_offset() const { return mu_index() + 2; }
  Eigen::Index size() const { return beta_offset() + n_beta; }

  Eigen::VectorXd pack(const CureParams &p) const {
    if (p.beta.size() != n_beta) throw DimensionMismatch("ParamLayout: beta has the wrong length");
    Eigen::VectorXd v(size());
    if (alpha_free()) v[0] = p.alpha;
    v[mu_index()] = p.bp.mu;
    v[phi_index()] = p.bp.phi;
    v.segment(beta_offset(), n_beta) = p.beta;
    return v;
  }

  CureParams unpack(const Eigen::VectorXd &v) const {
    if (v.size() != size()) throw DimensionMismatch("ParamLayout: vector has the wrong length");
    CureParams p;
    p.alpha = alpha_free() ? v[0] : *fixed_alpha;
    p.bp = {v[mu_index()], v[phi_index()]};
    p.beta = v.segment(beta_offset(), n_beta);
    return p;
  }

  std::vector<std::string> names(const std::vector<std::string> &covariates) const {
    std::vector<std::string> out;
    if (alpha_free()) out.push_back("alpha");
    out.push_back("mu");
    out.push_back("phi");
    for (Eigen::Index j = 0; j < n_beta; ++j) {
      out.push_back(j < static_cast<Eigen::Index>(covariates.size())
                        ? "beta" + std::to_string(j) + ":" + covariates[static_cast<std::size_t>(j)]
                        : "beta" + std::to_string(j));
    }
    return out;
  }
};

/// Log-likelihood contribution of a single observation.
inline double case_log_lik(double t, int delta, double eta, double alpha, const BetaPrimeLaw &bp) {
  const PopulationLaw law(alpha, eta, bp);
  const BpTails tails = bp.tails(t);
  return delta == 1 ? law.log_pdf(tails, bp.log_pdf(t)) : law.log_sf(tails);
}

/// Per-observation log-likelihood terms; entries are -inf where a term
/// underflows or the parameters are outside the model.
inline Eigen::VectorXd case_log_liks(const CureParams &params, const SurvivalDataset &data) {
  const Eigen::Index n = data.size();
  Eigen::VectorXd out = Eigen::VectorXd::Constant(n, kLogLikRejected);
  if (!params.valid()) return out;
  if (params.beta.size() != data.n_coef()) {
    throw DimensionMismatch("log_lik: beta length does not match the design matrix");
  }
  try {
    const BetaPrimeLaw bp(params.bp);
    const Eigen::VectorXd eta = data.X * params.beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = case_log_lik(data.t[i], data.delta[static_cast<std::size_t>(i)], eta[i],
                                    params.alpha, bp);
      out[i] = std::isnan(v) ? kLogLikRejected : v;
    }
  } catch (const DomainError &) {
  } catch (const IterationLimitError &) {
  }
  return out;
}

inline double log_lik(const CureParams &params, const SurvivalDataset &data) {
  const Eigen::VectorXd terms = case_log_liks(params, data);
  for (Eigen::Index i = 0; i < terms.size(); ++i) {
    if (!std::isfinite(terms[i])) return kLogLikRejected;
  }
  return pairwise_sum(std::span<const double>(terms.data(), static_cast<std::size_t>(terms.size())));
}

inline double log_lik(const Eigen::VectorXd &v, const ParamLayout &layout, const SurvivalDataset &data) {
  return log_lik(layout.unpack(v), data);
}

inline Eigen::VectorXd grad_log_lik(const CureParams &params, const SurvivalDataset &data,
                                    const ParamLayout &layout) {
  return numdiff::central_gradient(
      [&](const Eigen::VectorXd &v) { return log_lik(v, layout, data); }, layout.pack(params));
}

/// Gradient over (alpha, mu, phi, beta): length q + 4.
inline Eigen::VectorXd grad_log_lik(const CureParams &params, const SurvivalDataset &data) {
  return grad_log_lik(params, data, ParamLayout::full(params.beta.size()));
}

inline Eigen::MatrixXd hessian_log_lik(const CureParams &params, const SurvivalDataset &data,
                                       const ParamLayout &layout) {
  return numdiff::central_hessian(
      [&](const Eigen::VectorXd &v) { return log_lik(v, layout, data); }, layout.pack(params));
}

inline Eigen::MatrixXd hessian_log_lik(const CureParams &params, const SurvivalDataset &data) {
  return hessian_log_lik(params, data, ParamLayout::full(params.beta.size()));
}

/// Minus the Hessian; throws NotPositiveDefinite (with the spectrum) rather
/// than handing back a matrix that cannot be inverted into a covariance.
inline Eigen::MatrixXd observed_information(const CureParams &params, const SurvivalDataset &data,
                                            const ParamLayout &layout) {
  const Eigen::MatrixXd info = -hessian_log_lik(params, data, layout);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) {
    throw NotPositiveDefinite("observed information is not positive definite",
                              std::vector<double>(ev.data(), ev.data() + ev.size()));
  }
  return info;
}

inline Eigen::MatrixXd observed_information(const CureParams &params, const SurvivalDataset &data) {
  return observed_information(params, data, ParamLayout::full(params.beta.size()));
}

}  // namespace nbbp
