#pragma once

// Random generation from the population law and a Monte Carlo harness.
//
// Each subject consumes exactly four uniforms in the order x, v, w, c:
// x ~ Bernoulli(1/2) covariate, v decides cure (v < p0), w ~ U(p0, 1) fixes
// the latent time through S_pop(y) = w, c ~ U(a, b) is the censoring time.
// S_pop(y) = w is solved in closed form,
//   F_BP(y) = (w^-alpha - 1) / (p0^-alpha - 1)     (ln w / ln p0 at alpha = 0),
// with the upper tail 1 - F_BP formed without cancellation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nbbp/betaprime.hpp"
#include "nbbp/cure_model.hpp"
#include "nbbp/dataset.hpp"
#include "nbbp/errors.hpp"
#include "nbbp/fit.hpp"
#include "nbbp/rng.hpp"
#include "nbbp/special_fn.hpp"

namespace nbbp {

struct SimConfig {
  int n = 200;
  CureParams truth{2.0, {0.5, 1.0}, Eigen::Vector2d(0.5, -1.0)};
  double censor_a = 0.01;
  double censor_b = 10.0;
  int reps = 500;
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
  FamilySpec family = FamilySpec::nbbp();
  FitOptions fit;

  void validate() const {
    if (n < 2) throw DomainError("SimConfig: n must be at least 2");
    if (reps < 1) throw DomainError("SimConfig: reps must be at least 1");
    if (!(censor_a > 0.0 && censor_a < censor_b && std::isfinite(censor_b))) {
      throw DomainError("SimConfig: censoring window needs 0 < a < b");
    }
    if (!truth.valid()) throw DomainError("SimConfig: invalid true parameters");
    if (truth.beta.size() != 2) throw DimensionMismatch("SimConfig: beta must be (b0, b1)");
    if (threads < 1) throw DomainError("SimConfig: threads must be at least 1");
  }
};

/// Upper and lower tails of F_BP at the latent time solving S_pop(y) = w,
/// for p0 < w < 1.
inline std::pair<double, double> latent_cdf_tails(double w, double p0, double alpha) {
  const double lw = std::log(w), lp = std::log(p0);
  double F, Fc;
  if (std::fabs(alpha) < kAlphaBand) {
    F = lw / lp;
    Fc = (lw - lp) / -lp;
  } else {
    const double den = std::expm1(-alpha * lp);
    F = std::expm1(-alpha * lw) / den;
    Fc = std::exp(-alpha * lw) * std::expm1(alpha * (lw - lp)) / den;
  }
  return {std::clamp(F, 0.0, 1.0), std::clamp(Fc, 0.0, 1.0)};
}

/// Latent time y with S_pop(y) = w; +inf for w <= p0, 0 for w >= 1.
inline double latent_time(double w, double p0, double alpha, const BetaPrimeLaw &bp) {
  if (!(w > p0)) return std::numeric_limits<double>::infinity();
  if (!(w < 1.0)) return 0.0;
  auto [F, Fc] = latent_cdf_tails(w, p0, alpha);
  if (Fc <= 0.0) return std::numeric_limits<double>::infinity();
  if (F <= 0.0) F = std::numeric_limits<double>::denorm_min();
  return bp.quantile_tails(F, Fc);
}

struct SubjectDraw {
  double x = 0.0;
  double p0 = 0.0;
  bool cured = false;
  double y = 0.0;  // latent time; +inf when cured
  double c = 0.0;
};

inline SubjectDraw draw_subject(RandomStream &rs, const CureParams &truth, const BetaPrimeLaw &bp, double a,
                                double b) {
  SubjectDraw s;
  const double ux = rs.uniform(), v = rs.uniform(), uw = rs.open_uniform(), uc = rs.uniform();
  s.x = ux < 0.5 ? 1.0 : 0.0;
  s.p0 = logistic(truth.beta[0] + truth.beta[1] * s.x);
  s.cured = v < s.p0;
  s.y = s.cured ? std::numeric_limits<double>::infinity()
                : latent_time(s.p0 + (1.0 - s.p0) * uw, s.p0, truth.alpha, bp);
  s.c = a + (b - a) * uc;
  return s;
}

/// Replicate `rep_index` of the design; cured subjects are censored at c.
inline SurvivalDataset draw_sample(const SimConfig &cfg, std::uint64_t rep_index) {
  cfg.validate();
  const BetaPrimeLaw bp(cfg.truth.bp);
  RandomStream rs(cfg.seed, rep_index);
  SurvivalDataset d;
  d.t.resize(cfg.n);
  d.delta.resize(static_cast<std::size_t>(cfg.n));
  d.X.resize(cfg.n, 2);
  d.names = {"intercept", "x"};
  for (int i = 0; i < cfg.n; ++i) {
    const SubjectDraw s = draw_subject(rs, cfg.truth, bp, cfg.censor_a, cfg.censor_b);
    d.X(i, 0) = 1.0;
    d.X(i, 1) = s.x;
    const bool event = s.y <= s.c;
    d.t[i] = event ? s.y : s.c;
    d.delta[static_cast<std::size_t>(i)] = event ? 1 : 0;
  }
  return d;
}

namespace detail {

struct PilotDraw {
  double p0;
  double y;  // non-cured latent time
};

/// Expected censored fraction for c ~ U(a, b), integrating out the cure
/// indicator of each pilot subject.
inline double expected_censoring(const std::vector<PilotDraw> &pilot, double a, double b) {
  double s = 0.0;
  for (const PilotDraw &d : pilot) s += d.p0 + (1.0 - d.p0) * std::clamp((d.y - a) / (b - a), 0.0, 1.0);
  return s / static_cast<double>(pilot.size());
}

inline constexpr std::uint64_t kPilotStream = 0x50494C4F54ULL;

}  // namespace detail

/// Fixes a = 0.01 and finds b so that the expected censoring over 10^4
/// pilot subjects (x alternating between groups) equals `target_pct`.
inline std::pair<double, double> calibrate_censor_window(double target_pct, const SimConfig &cfg) {
  if (!(target_pct > 0.0 && target_pct < 100.0)) {
    throw DomainError("calibrate_censor_window: target must lie in (0, 100)");
  }
  const double a = 0.01;
  const CureParams &truth = cfg.truth;
  if (truth.beta.size() != 2) throw DimensionMismatch("calibrate_censor_window: beta must be (b0, b1)");
  const BetaPrimeLaw bp(truth.bp);
  RandomStream rs(cfg.seed, detail::kPilotStream);
  std::vector<detail::PilotDraw> pilot(10000);
  double floor = 0.0;
  for (std::size_t i = 0; i < pilot.size(); ++i) {
    const double p0 = logistic(truth.beta[0] + truth.beta[1] * static_cast<double>(i % 2));
    pilot[i] = {p0, latent_time(p0 + (1.0 - p0) * rs.open_uniform(), p0, truth.alpha, bp)};
    floor += p0;
  }
  floor /= static_cast<double>(pilot.size());
  const double target = target_pct / 100.0;
  if (target <= floor) {
    throw Unachievable("calibrate_censoring: target " + std::to_string(target_pct) +
                       "% is at or below the cure floor " + std::to_string(100.0 * floor) + "%");
  }
  double lo = a * (1.0 + 1e-12), hi = 2.0 * a + 1.0;
  if (detail::expected_censoring(pilot, a, lo) < target) {
    throw Unachievable("calibrate_censoring: target exceeds the censoring reachable with a = 0.01");
  }
  int grow = 0;
  while (detail::expected_censoring(pilot, a, hi) > target) {
    hi *= 2.0;
    if (++grow > 2000) throw Unachievable("calibrate_censoring: no finite window reaches the target");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (detail::expected_censoring(pilot, a, mid) > target ? lo : hi) = mid;
  }
  return {a, 0.5 * (lo + hi)};
}

struct ParamSummary {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double sd = 0.0;  // NaN with fewer than two usable replicates
  double bias = 0.0;
  double mse = 0.0;
};

struct MCReport {
  SimConfig config;
  std::vector<ParamSummary> params;  // mu, phi, alpha (if free), beta0, beta1, p00, p01
  double censoring_pct = 0.0;        // mean realized censoring over all replicates
  int n_used = 0;                    // converged plus boundary replicates
  int n_converged = 0;
  int n_boundary = 0;
  int n_failed = 0;
};

struct ReplicateOutcome {
  double censoring = 0.0;
  FitStatus status = FitStatus::Failed;
  Eigen::VectorXd estimates;  // in report order
};

namespace detail {

inline ReplicateOutcome run_replicate(const SimConfig &cfg, int rep) {
  ReplicateOutcome out;
  const SurvivalDataset d = draw_sample(cfg, static_cast<std::uint64_t>(rep));
  out.censoring = 1.0 - static_cast<double>(d.n_events()) / static_cast<double>(d.size());
  try {
    const FitResult f = fit_ml(d, cfg.family, std::nullopt, cfg.seed + static_cast<std::uint64_t>(rep), cfg.fit);
    out.status = f.status;
    const CureParams &e = f.estimates;
    std::vector<double> v{e.bp.mu, e.bp.phi};
    if (f.layout.alpha_free()) v.push_back(e.alpha);
    v.push_back(e.beta[0]);
    v.push_back(e.beta[1]);
    v.push_back(logistic(e.beta[0]));
    v.push_back(logistic(e.beta[0] + e.beta[1]));
    out.estimates = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  } catch (const Error &) {
    out.status = FitStatus::Failed;
  }
  return out;
}

}  // namespace detail

/// Draws and fits every replicate, then aggregates in replicate order.
/// Failed fits are counted and excluded; boundary maxima are kept.
inline MCReport mc_study(const SimConfig &cfg) {
  cfg.validate();
  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(cfg.reps));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < cfg.reps; r = next++) outcomes[static_cast<std::size_t>(r)] = detail::run_replicate(cfg, r);
  };
  const int nt = std::min(cfg.threads, cfg.reps);
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (std::thread &t : pool) t.join();
  }

  MCReport rep;
  rep.config = cfg;
  const CureParams &tr = cfg.truth;
  std::vector<std::pair<std::string, double>> truth{{"mu", tr.bp.mu}, {"phi", tr.bp.phi}};
  if (!cfg.family.fixed_alpha()) truth.emplace_back("alpha", tr.alpha);
  truth.emplace_back("beta0", tr.beta[0]);
  truth.emplace_back("beta1", tr.beta[1]);
  truth.emplace_back("p00", logistic(tr.beta[0]));
  truth.emplace_back("p01", logistic(tr.beta[0] + tr.beta[1]));

  std::vector<double> cens;
  std::vector<std::vector<double>> cols(truth.size());
  for (const ReplicateOutcome &o : outcomes) {
    cens.push_back(o.censoring);
    switch (o.status) {
      case FitStatus::Converged: ++rep.n_converged; break;
      case FitStatus::Boundary: ++rep.n_boundary; break;
      case FitStatus::Failed: ++rep.n_failed; continue;
    }
    for (std::size_t j = 0; j < truth.size(); ++j) cols[j].push_back(o.estimates[static_cast<Eigen::Index>(j)]);
  }
  rep.n_used = rep.n_converged + rep.n_boundary;
  rep.censoring_pct = 100.0 * pairwise_sum(cens) / static_cast<double>(cens.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t j = 0; j < truth.size(); ++j) {
    ParamSummary s{truth[j].first, truth[j].second, nan, nan, nan, nan};
    const std::vector<double> &x = cols[j];
    const double m = static_cast<double>(x.size());
    if (!x.empty()) {
      s.mean = pairwise_sum(x) / m;
      s.bias = s.mean - s.truth;
      std::vector<double> dev(x.size()), err(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        dev[i] = (x[i] - s.mean) * (x[i] - s.mean);
        err[i] = (x[i] - s.truth) * (x[i] - s.truth);
      }
      s.mse = pairwise_sum(err) / m;
      if (x.size() >= 2) s.sd = std::sqrt(pairwise_sum(dev) / (m - 1.0));
    }
    rep.params.push_back(s);
  }
  return rep;
}

struct Preset {
  std::string name;
  CureParams truth;
  double target_censoring_pct;
};

/// Built-in scenarios: s1 (mu 0.5, phi 1) and s2 (mu 1, phi 10), both
/// with alpha 2 and beta (0.5, -1).
inline Preset find_preset(const std::string &name) {
  if (name == "table1-s1") return {name, {2.0, {0.5, 1.0}, Eigen::Vector2d(0.5, -1.0)}, 52.98};
  if (name == "table1-s2") return {name, {2.0, {1.0, 10.0}, Eigen::Vector2d(0.5, -1.0)}, 65.85};
  throw DomainError("unknown preset '" + name + "' (expected table1-s1 or table1-s2)");
}

/// Preset design at sample size n with a calibrated censoring window.
inline SimConfig preset_config(const std::string &name, int n, int reps, std::uint64_t seed) {
  const Preset p = find_preset(name);
  SimConfig cfg;
  cfg.n = n;
  cfg.reps = reps;
  cfg.seed = seed;
  cfg.truth = p.truth;
  const auto [a, b] = calibrate_censor_window(p.target_censoring_pct, cfg);
  cfg.censor_a = a;
  cfg.censor_b = b;
  return cfg;
}

}  // namespace nbbp
