#pragma once

// Special functions shared by every other module: log-gamma, log-beta, the
// regularized incomplete beta ratio and its inverse, the standard normal
// quantile, plus a few log-space helpers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>

#include "nbbp/errors.hpp"

namespace nbbp {

struct NumericTolerance {
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
  int max_iter = 200;

  void validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || max_iter < 1) {
      throw DomainError("NumericTolerance: abs_tol, rel_tol and max_iter must be positive");
    }
  }
};

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// The continued fraction needs O(sqrt(max(a, b))) terms; this cap covers
// shapes up to ~1e8.
inline constexpr int kMaxContinuedFractionTerms = 200000;

// Modified Lentz evaluation of the continued fraction for I_y(a, b).
inline double inc_beta_cf(double y, double a, double b) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * y / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxContinuedFractionTerms; ++m) {
    const double dm = m;
    const double m2 = 2.0 * dm;
    double aa = dm * (b - dm) * y / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + dm) * (qab + dm) * y / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw IterationLimitError("incomplete beta continued fraction did not converge", 0.0, 1.0);
}

inline bool positive_finite(double v) { return v > 0.0 && std::isfinite(v); }

}  // namespace detail

/// ln Γ(a) for a > 0.
inline double log_gamma(double a) {
  if (!detail::positive_finite(a)) {
    throw DomainError("log_gamma: argument must be positive and finite, got " + std::to_string(a));
  }
  int sign = 1;
  return ::lgamma_r(a, &sign);
}

inline double log_beta(double a, double b) {
  if (!detail::positive_finite(a) || !detail::positive_finite(b)) {
    throw DomainError("log_beta: shapes must be positive and finite");
  }
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

/// log(exp(x) + exp(y)) without overflow.
inline double log_add_exp(double x, double y) {
  if (x == detail::kNegInf) return y;
  if (y == detail::kNegInf) return x;
  const double hi = x > y ? x : y;
  const double lo = x > y ? y : x;
  return hi + std::log1p(std::exp(lo - hi));
}

/// log(1 + exp(x)).
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// log(exp(x) - 1) for x > 0.
inline double log_expm1(double x) {
  if (x > 36.0) return x + std::log1p(-std::exp(-x));
  return std::log(std::expm1(x));
}

/// Both tails of the incomplete beta ratio with their logarithms.
struct BetaTails {
  double lower = 0.0;  // I_y(a, b)
  double upper = 1.0;  // 1 - I_y(a, b)
  double log_lower = detail::kNegInf;
  double log_upper = 0.0;
};

/// Incomplete beta tails at y given both y and 1 - y (so callers that know
/// 1 - y more accurately than by subtraction can pass it) and a precomputed
/// ln B(a, b). No argument validation; the public wrappers do that.
inline BetaTails inc_beta_tails(double y, double one_minus_y, double a, double b, double lbeta) {
  BetaTails out;
  if (y <= 0.0) return out;
  if (one_minus_y <= 0.0) {
    out.lower = 1.0;
    out.upper = 0.0;
    out.log_lower = 0.0;
    out.log_upper = detail::kNegInf;
    return out;
  }
  const double log_front = a * std::log(y) + b * std::log(one_minus_y) - lbeta;
  if (y < (a + 1.0) / (a + b + 2.0)) {
    out.log_lower = log_front - std::log(a) + std::log(detail::inc_beta_cf(y, a, b));
    out.lower = std::exp(out.log_lower);
    out.upper = -std::expm1(out.log_lower);
    out.log_upper = std::log1p(-out.lower);
  } else {
    out.log_upper = log_front - std::log(b) + std::log(detail::inc_beta_cf(one_minus_y, b, a));
    out.upper = std::exp(out.log_upper);
    out.lower = -std::expm1(out.log_upper);
    out.log_lower = std::log1p(-out.upper);
  }
  return out;
}

inline BetaTails inc_beta_tails(double y, double a, double b) {
  if (!(y >= 0.0 && y <= 1.0)) throw DomainError("incomplete beta: y must lie in [0, 1]");
  return inc_beta_tails(y, 1.0 - y, a, b, log_beta(a, b));
}

/// Regularized incomplete beta ratio I_y(a, b) = B_y(a, b) / B(a, b).
inline double reg_inc_beta(double y, double a, double b) {
  return inc_beta_tails(y, a, b).lower;
}

/// Solution of the inverse problem for one tail, stored as (y, 1 - y).
struct BetaRoot {
  double y = 0.0;
  double one_minus_y = 1.0;
};

namespace detail {

// Solves I_y(a, b) = p for p <= 1/2 by Newton steps on s = ln y against
// ln I, safeguarded by bisection on a bracket in s. Near zero ln I is close
// to linear in ln y, so the iteration is well conditioned for tiny roots.
inline BetaRoot inv_lower_tail(double p, double a, double b, double lbeta,
                               const NumericTolerance &tol) {
  const double log_p = std::log(p);
  auto h = [&](double s, double &slope) {
    const double y = std::exp(s);
    const double ymc = -std::expm1(s);
    const BetaTails t = inc_beta_tails(y, ymc, a, b, lbeta);
    const double log_dens = (a - 1.0) * s + (b - 1.0) * std::log(ymc) - lbeta;
    slope = std::exp(s + log_dens - t.log_lower);
    return t.log_lower - log_p;
  };

  double s_lo = std::log(std::numeric_limits<double>::denorm_min());
  double s_hi = 0.0;
  double slope = 0.0;
  if (h(s_lo, slope) >= 0.0) return {0.0, 1.0};

  // Leading-order small-y approximation I_y ≈ y^a / (a B(a, b)).
  double s = (log_p + std::log(a) + lbeta) / a;
  if (!(s < s_hi) || !(s > s_lo)) s = 0.5 * (s_lo + s_hi);
  if (s >= -1e-300) s = std::log(0.5);

  for (int it = 0; it < tol.max_iter; ++it) {
    const double g = h(s, slope);
    if (std::fabs(g) <= 1e-14) break;
    if (g > 0.0) s_hi = s; else s_lo = s;
    double next = s - g / slope;
    if (!(next > s_lo && next < s_hi) || !std::isfinite(next)) next = 0.5 * (s_lo + s_hi);
    if (std::fabs(next - s) <= 1e-15 * std::max(1.0, std::fabs(s)) ||
        s_hi - s_lo <= 1e-15 * std::max(1.0, std::fabs(s))) {
      s = next;
      break;
    }
    s = next;
    if (it + 1 == tol.max_iter) {
      throw IterationLimitError("inv_reg_inc_beta: iteration limit reached", std::exp(s_lo),
                                std::exp(s_hi));
    }
  }
  return {std::exp(s), -std::expm1(s)};
}

}  // namespace detail

/// Inverse of the incomplete beta ratio returned as (y, 1 - y), given both
/// target tails p = I_y(a, b) and q = 1 - p. The smaller tail is solved
/// directly so that roots close to 1 keep their relative precision in 1 - y.
inline BetaRoot inv_inc_beta_tails(double p, double q, double a, double b,
                                   const NumericTolerance &tol = {}) {
  if (!(p >= 0.0 && p <= 1.0) || !(q >= 0.0 && q <= 1.0)) {
    throw DomainError("inv_reg_inc_beta: probability must lie in [0, 1]");
  }
  const double lbeta = log_beta(a, b);
  if (p == 0.0) return {0.0, 1.0};
  if (q == 0.0) return {1.0, 0.0};
  if (p <= q) return detail::inv_lower_tail(p, a, b, lbeta, tol);
  const BetaRoot r = detail::inv_lower_tail(q, b, a, lbeta, tol);
  return {r.one_minus_y, r.y};
}

inline double inv_reg_inc_beta(double p, double a, double b, const NumericTolerance &tol = {}) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("inv_reg_inc_beta: p must lie in [0, 1]");
  return inv_inc_beta_tails(p, 1.0 - p, a, b, tol).y;
}

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Φ⁻¹(p): rational starting value refined by one Halley step on erfc.
inline double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("std_normal_quantile: p must lie in (0, 1)");
  if (p > 0.5) return -std_normal_quantile(1.0 - p);
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  double x;
  if (p < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  for (int i = 0; i < 2; ++i) {
    const double e = std_normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

/// Deterministic pairwise summation; the result depends only on the order
/// of the input, so serial and split evaluations agree bit for bit.
inline double pairwise_sum(std::span<const double> v) {
  constexpr std::size_t kBlock = 8;
  if (v.size() <= kBlock) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace nbbp
