#pragma once

// Negative binomial beta prime population law.
//
// With cure fraction p0 (logistic in x'beta), dispersion alpha and a beta
// prime latent time F_BP:
//
//   S_pop(t) = [1 + (p0^-alpha - 1) F_BP(t)]^(-1/alpha)      alpha != 0
//   S_pop(t) = p0^F_BP(t)                                   alpha == 0
//
// theta = (p0^-alpha - 1) / alpha is derived, never estimated, so theta > 0
// and alpha theta > -1 hold for every real alpha.
//
// All evaluation goes through the identity
//   1 + (p0^-alpha - 1) F = S_BP + F p0^-alpha,
// a sum of two nonnegative terms that is evaluated with log-add-exp. This
// avoids cancellation for alpha < 0 near the plateau and overflow of
// p0^-alpha for large alpha.

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "nbbp/betaprime.hpp"
#include "nbbp/errors.hpp"
#include "nbbp/special_fn.hpp"

namespace nbbp {

/// Inside |alpha| < kAlphaBand the alpha = 0 (promotion time) formulas are used.
inline constexpr double kAlphaBand = 1e-6;

struct CureParams {
  double alpha = 0.0;
  BetaPrimeParams bp;
  Eigen::VectorXd beta;  // intercept first

  bool valid() const {
    return std::isfinite(alpha) && bp.valid() && beta.size() > 0 && beta.allFinite();
  }
};

struct SubjectLink {
  Eigen::VectorXd x;
  double p0 = 0.5;
  double theta = 0.0;
};

inline double linear_predictor(const Eigen::Ref<const Eigen::VectorXd> &x,
                               const Eigen::Ref<const Eigen::VectorXd> &beta) {
  if (x.size() != beta.size()) {
    throw DimensionMismatch("covariate vector has length " + std::to_string(x.size()) +
                            " but beta has length " + std::to_string(beta.size()));
  }
  return x.dot(beta);
}

/// Logistic of the linear predictor, stable for large |x'beta|.
inline double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double cure_fraction(const Eigen::Ref<const Eigen::VectorXd> &x,
                            const Eigen::Ref<const Eigen::VectorXd> &beta) {
  return logistic(linear_predictor(x, beta));
}

inline double theta_from_p0(double p0, double alpha) {
  if (!(p0 > 0.0 && p0 < 1.0)) throw DomainError("theta_from_p0: p0 must lie in (0, 1)");
  if (!std::isfinite(alpha)) throw DomainError("theta_from_p0: alpha must be finite");
  const double neg_log_p0 = -std::log(p0);
  if (std::fabs(alpha) < kAlphaBand) return neg_log_p0;
  return std::expm1(alpha * neg_log_p0) / alpha;
}

inline SubjectLink subject_link(const Eigen::Ref<const Eigen::VectorXd> &x, const CureParams &params) {
  const double p0 = cure_fraction(x, params.beta);
  return {x, p0, theta_from_p0(p0, params.alpha)};
}

/// Population law for one subject, parameterized by its linear predictor.
class PopulationLaw {
 public:
  PopulationLaw(double alpha, double eta, const BetaPrimeLaw &bp)
      : bp_(&bp), alpha_(alpha), in_band_(std::fabs(alpha) < kAlphaBand) {
    if (!std::isfinite(alpha) || !std::isfinite(eta)) {
      throw DomainError("PopulationLaw: alpha and the linear predictor must be finite");
    }
    neg_log_p0_ = softplus(-eta);
    log_p0_ = -neg_log_p0_;
    if (in_band_) {
      log_theta_ = std::log(neg_log_p0_);
    } else {
      const double x = alpha * neg_log_p0_;
      log_theta_ = alpha > 0.0 ? log_expm1(x) - std::log(alpha)
                               : std::log(-std::expm1(x)) - std::log(-alpha);
    }
  }

  double alpha() const { return alpha_; }
  double p0() const { return std::exp(log_p0_); }
  double log_p0() const { return log_p0_; }
  double theta() const { return std::exp(log_theta_); }
  double log_theta() const { return log_theta_; }
  const BetaPrimeLaw &latent() const { return *bp_; }

  /// ln(1 + alpha theta F_BP) outside the alpha = 0 band.
  double log_bracket(const BpTails &bt) const {
    return log_add_exp(bt.log_sf, bt.log_cdf + alpha_ * neg_log_p0_);
  }

  double log_sf(const BpTails &bt) const {
    if (in_band_) return -bt.cdf * neg_log_p0_;
    return -log_bracket(bt) / alpha_;
  }

  double log_pdf(const BpTails &bt, double log_bp_pdf) const {
    if (in_band_) return log_theta_ - bt.cdf * neg_log_p0_ + log_bp_pdf;
    return log_theta_ + (-1.0 / alpha_ - 1.0) * log_bracket(bt) + log_bp_pdf;
  }

  double log_hazard(const BpTails &bt, double log_bp_pdf) const {
    if (in_band_) return log_theta_ + log_bp_pdf;
    return log_theta_ + log_bp_pdf - log_bracket(bt);
  }

  double log_sf(double t) const {
    if (!(t >= 0.0)) throw DomainError("s_pop: t must be nonnegative");
    return log_sf(bp_->tails(t));
  }

  double log_pdf(double t) const {
    if (!(t > 0.0)) throw DomainError("f_pop: t must be positive");
    return log_pdf(bp_->tails(t), bp_->log_pdf(t));
  }

  double log_hazard(double t) const {
    if (!(t > 0.0)) throw DomainError("h_pop: t must be positive");
    return log_hazard(bp_->tails(t), bp_->log_pdf(t));
  }

  double sf(double t) const { return std::exp(log_sf(t)); }
  double pdf(double t) const { return std::exp(log_pdf(t)); }
  double hazard(double t) const { return std::exp(log_hazard(t)); }

 private:
  const BetaPrimeLaw *bp_;
  double alpha_;
  bool in_band_;
  double neg_log_p0_ = 0.0;
  double log_p0_ = 0.0;
  double log_theta_ = 0.0;
};

namespace detail {

template <class F>
double with_population_law(const Eigen::Ref<const Eigen::VectorXd> &x, const CureParams &params,
                           F &&f) {
  const BetaPrimeLaw bp(params.bp);
  const PopulationLaw law(params.alpha, linear_predictor(x, params.beta), bp);
  return f(law);
}

}  // namespace detail

inline double s_pop(double t, const Eigen::Ref<const Eigen::VectorXd> &x, const CureParams &params) {
  return detail::with_population_law(x, params, [t](const PopulationLaw &l) { return l.sf(t); });
}

inline double f_pop(double t, const Eigen::Ref<const Eigen::VectorXd> &x, const CureParams &params) {
  return detail::with_population_law(x, params, [t](const PopulationLaw &l) { return l.pdf(t); });
}

inline double h_pop(double t, const Eigen::Ref<const Eigen::VectorXd> &x, const CureParams &params) {
  return detail::with_population_law(x, params, [t](const PopulationLaw &l) { return l.hazard(t); });
}

/// Proper survival function of the susceptible (non-cured) subpopulation.
inline double s_noncured(double t, const Eigen::Ref<const Eigen::VectorXd> &x,
                         const CureParams &params) {
  return detail::with_population_law(x, params, [t](const PopulationLaw &l) {
    const double p0 = l.p0();
    if (p0 >= 1.0 - 1e-12) throw DegenerateData("s_noncured: cure fraction is numerically 1");
    return (l.sf(t) - p0) / (1.0 - p0);
  });
}

inline double f_noncured(double t, const Eigen::Ref<const Eigen::VectorXd> &x,
                         const CureParams &params) {
  return detail::with_population_law(x, params, [t](const PopulationLaw &l) {
    const double p0 = l.p0();
    if (p0 >= 1.0 - 1e-12) throw DegenerateData("f_noncured: cure fraction is numerically 1");
    return l.pdf(t) / (1.0 - p0);
  });
}

}  // namespace nbbp
