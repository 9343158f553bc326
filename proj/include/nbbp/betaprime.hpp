#pragma once

// Beta prime distribution indexed by its mean mu and precision phi.
// Classical shapes: a = mu (phi + 1), b = phi + 2.

#include <cmath>
#include <limits>
#include <utility>

#include "nbbp/errors.hpp"
#include "nbbp/special_fn.hpp"

namespace nbbp {

struct BetaPrimeParams {
  double mu = 1.0;   // mean
  double phi = 1.0;  // precision

  double shape_a() const { return mu * (phi + 1.0); }
  double shape_b() const { return phi + 2.0; }

  bool valid() const { return detail::positive_finite(mu) && detail::positive_finite(phi); }

  void validate() const {
    if (!valid()) throw DomainError("BetaPrimeParams: mu and phi must be positive and finite");
  }
};

/// CDF and survival function at one point, with logs.
struct BpTails {
  double cdf = 0.0;
  double sf = 1.0;
  double log_cdf = detail::kNegInf;
  double log_sf = 0.0;
};

/// A beta prime law with the normalizing constant cached, for repeated
/// evaluation at many time points (one per subject in the likelihood).
class BetaPrimeLaw {
 public:
  explicit BetaPrimeLaw(const BetaPrimeParams &p)
      : params_(p), a_(p.shape_a()), b_(p.shape_b()), lbeta_(0.0) {
    p.validate();
    lbeta_ = log_beta(a_, b_);
  }

  const BetaPrimeParams &params() const { return params_; }
  double shape_a() const { return a_; }
  double shape_b() const { return b_; }

  /// ln f(t) for t > 0. At t = 0 the limit is returned (+inf when a < 1).
  double log_pdf(double t) const {
    if (!(t >= 0.0)) throw DomainError("beta prime density: t must be nonnegative");
    if (t == 0.0) {
      if (a_ > 1.0) return detail::kNegInf;
      if (a_ == 1.0) return -lbeta_;
      return detail::kInf;
    }
    if (std::isinf(t)) return detail::kNegInf;
    return (a_ - 1.0) * std::log(t) - (a_ + b_) * std::log1p(t) - lbeta_;
  }

  double pdf(double t) const { return std::exp(log_pdf(t)); }

  /// Both tails via y = t / (1 + t), 1 - y = 1 / (1 + t).
  BpTails tails(double t) const {
    if (!(t >= 0.0)) throw DomainError("beta prime cdf: t must be nonnegative");
    BpTails out;
    if (t == 0.0) return out;
    if (std::isinf(t)) return {1.0, 0.0, 0.0, detail::kNegInf};
    const double y = t / (1.0 + t);
    const double ymc = 1.0 / (1.0 + t);
    const BetaTails bt = inc_beta_tails(y, ymc, a_, b_, lbeta_);
    return {bt.lower, bt.upper, bt.log_lower, bt.log_upper};
  }

  double cdf(double t) const { return tails(t).cdf; }
  double sf(double t) const { return tails(t).sf; }

  /// Time t with CDF u and survival s = 1 - u. Both are passed so that
  /// upper-tail quantiles keep full precision.
  double quantile_tails(double u, double s, const NumericTolerance &tol = {}) const {
    if (!(u > 0.0 && s > 0.0)) throw DomainError("beta prime quantile: u must lie in (0, 1)");
    const BetaRoot r = inv_inc_beta_tails(u, s, a_, b_, tol);
    if (r.one_minus_y <= 0.0) return detail::kInf;
    return r.y / r.one_minus_y;
  }

  double quantile(double u, const NumericTolerance &tol = {}) const {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("beta prime quantile: u must lie in (0, 1)");
    return quantile_tails(u, 1.0 - u, tol);
  }

  /// f / (1 - F); +inf signals that the survival function underflowed.
  double hazard(double t) const {
    if (!(t > 0.0)) throw DomainError("beta prime hazard: t must be positive");
    const BpTails tt = tails(t);
    if (tt.sf <= 0.0) return detail::kInf;
    return std::exp(log_pdf(t) - tt.log_sf);
  }

 private:
  BetaPrimeParams params_;
  double a_;
  double b_;
  double lbeta_;
};

inline double bp_pdf(double t, const BetaPrimeParams &p) {
  if (!(t >= 0.0)) throw DomainError("bp_pdf: t must be nonnegative");
  return BetaPrimeLaw(p).pdf(t);
}

inline double bp_log_pdf(double t, const BetaPrimeParams &p) { return BetaPrimeLaw(p).log_pdf(t); }

inline double bp_cdf(double t, const BetaPrimeParams &p) { return BetaPrimeLaw(p).cdf(t); }

inline double bp_sf(double t, const BetaPrimeParams &p) { return BetaPrimeLaw(p).sf(t); }

inline double bp_quantile(double u, const BetaPrimeParams &p) { return BetaPrimeLaw(p).quantile(u); }

inline double bp_hazard(double t, const BetaPrimeParams &p) { return BetaPrimeLaw(p).hazard(t); }

struct BpMoments {
  double mean;
  double variance;
};

/// Mean mu and variance mu (mu + 1) / phi.
inline BpMoments bp_moments(const BetaPrimeParams &p) {
  p.validate();
  return {p.mu, p.mu * (p.mu + 1.0) / p.phi};
}

}  // namespace nbbp
