#pragma once

// Randomized quantile residuals with QQ data, the Kaplan-Meier estimator
// and fitted survival overlays per covariate group.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nbbp/cure_model.hpp"
#include "nbbp/dataset.hpp"
#include "nbbp/errors.hpp"
#include "nbbp/fit.hpp"
#include "nbbp/rng.hpp"
#include "nbbp/special_fn.hpp"

namespace nbbp {

inline constexpr int kResidualSets = 5;
inline constexpr double kResidualClamp = 1e-12;

struct ResidualSet {
  Eigen::VectorXd r;            // per-case median over the randomizations, data order
  Eigen::VectorXd theoretical;  // Phi^-1((i - 0.5) / n)
  Eigen::VectorXd empirical;    // rank-wise median of the individually sorted sets
  std::uint64_t seed = kDefaultSeed;
};

namespace detail {

inline constexpr std::uint64_t kResidualStream = 0x5245534944ULL;

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace detail

/// Events use u = 1 - S_pop(t); censored cases draw u ~ U(1 - S_pop(t), 1).
/// Residuals are Phi^-1(u) with u clamped to [1e-12, 1 - 1e-12].
inline ResidualSet rq_residuals(const FitResult &fit, const SurvivalDataset &data, std::uint64_t seed = kDefaultSeed) {
  require_maximum(fit);
  if (data.fingerprint() != fit.data_fingerprint) {
    throw MismatchedData("rq_residuals: data differ from the data that were fitted");
  }
  const Eigen::Index n = data.size();
  Eigen::VectorXd surv(n);
  for (Eigen::Index i = 0; i < n; ++i) surv[i] = s_pop(data.t[i], data.X.row(i).transpose(), fit.estimates);

  std::vector<std::vector<double>> sets(kResidualSets, std::vector<double>(static_cast<std::size_t>(n)));
  for (int s = 0; s < kResidualSets; ++s) {
    RandomStream rs(seed, detail::kResidualStream + static_cast<std::uint64_t>(s));
    for (Eigen::Index i = 0; i < n; ++i) {
      // Upper tail 1 - u keeps precision near u = 1.
      double q = surv[i];
      if (data.delta[static_cast<std::size_t>(i)] == 0) q *= rs.open_uniform();
      q = std::clamp(q, kResidualClamp, 1.0 - kResidualClamp);
      sets[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] = -std_normal_quantile(q);
    }
  }

  ResidualSet out;
  out.seed = seed;
  out.r.resize(n);
  std::vector<double> col(kResidualSets);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int s = 0; s < kResidualSets; ++s) col[static_cast<std::size_t>(s)] = sets[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
    out.r[i] = detail::median_of(col);
  }
  for (auto &v : sets) std::sort(v.begin(), v.end());
  out.theoretical.resize(n);
  out.empirical.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.theoretical[i] = std_normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(n));
    for (int s = 0; s < kResidualSets; ++s) col[static_cast<std::size_t>(s)] = sets[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
    out.empirical[i] = detail::median_of(col);
  }
  return out;
}

struct KMCurve {
  std::optional<std::string> label;
  std::vector<double> time;   // distinct event times
  std::vector<double> surv;   // S(t) just after each event time
  std::vector<int> at_risk;   // risk set size at each event time
  std::vector<int> events;    // deaths at each event time
  int n = 0;

  /// Right-continuous step value; 1 before the first event.
  double at(double t) const {
    const auto it = std::upper_bound(time.begin(), time.end(), t);
    return it == time.begin() ? 1.0 : surv[static_cast<std::size_t>(it - time.begin() - 1)];
  }
};

/// Product-limit estimate over the given rows; tied events at one time are
/// removed together and censorings at an event time stay in its risk set.
inline KMCurve km_curve(const SurvivalDataset &data, const std::vector<Eigen::Index> &rows,
                        std::optional<std::string> label = std::nullopt) {
  if (rows.empty()) throw EmptyGroup("km_estimate: group " + label.value_or("(all)") + " has no observations");
  std::vector<std::pair<double, int>> obs;
  obs.reserve(rows.size());
  for (Eigen::Index i : rows) obs.emplace_back(data.t[i], data.delta[static_cast<std::size_t>(i)]);
  std::sort(obs.begin(), obs.end());
  KMCurve km;
  km.label = std::move(label);
  km.n = static_cast<int>(obs.size());
  int at_risk = km.n;
  double s = 1.0;
  for (std::size_t k = 0; k < obs.size();) {
    const double t = obs[k].first;
    int d = 0, leaving = 0;
    for (; k < obs.size() && obs[k].first == t; ++k, ++leaving) d += obs[k].second;
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      km.time.push_back(t);
      km.surv.push_back(s);
      km.at_risk.push_back(at_risk);
      km.events.push_back(d);
    }
    at_risk -= leaving;
  }
  return km;
}

inline std::string format_level(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Distinct values of column `col`, ascending.
inline std::vector<double> group_levels(const SurvivalDataset &data, Eigen::Index col) {
  std::vector<double> v(data.X.col(col).data(), data.X.col(col).data() + data.size());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline std::vector<Eigen::Index> rows_with(const SurvivalDataset &data, Eigen::Index col, double level) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (data.X(i, col) == level) rows.push_back(i);
  }
  return rows;
}

/// One curve for all rows, or one per level of `group_by` (a design column).
inline std::vector<KMCurve> km_estimate(const SurvivalDataset &data,
                                        const std::optional<std::string> &group_by = std::nullopt,
                                        const std::optional<std::vector<double>> &levels = std::nullopt) {
  data.validate();
  if (!group_by) {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(data.size()));
    for (Eigen::Index i = 0; i < data.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    return {km_curve(data, all)};
  }
  const Eigen::Index col = data.column(*group_by);
  std::vector<KMCurve> out;
  for (double g : levels.value_or(group_levels(data, col))) {
    out.push_back(km_curve(data, rows_with(data, col, g), *group_by + "=" + format_level(g)));
  }
  return out;
}

struct SfOverlay {
  std::string label;
  double level = 0.0;
  Eigen::VectorXd profile;  // covariate row used for the model curve
  double cure_fraction = 0.0;
  Eigen::VectorXd grid;
  Eigen::VectorXd model_sf;
  KMCurve km;

  /// Largest |S_model - S_KM| over both sides of every KM step.
  double sup_distance(const CureParams &p) const {
    double d = 0.0;
    double prev = 1.0;
    for (std::size_t k = 0; k < km.time.size(); ++k) {
      const double m = s_pop(km.time[k], profile, p);
      d = std::max({d, std::fabs(m - prev), std::fabs(m - km.surv[k])});
      prev = km.surv[k];
    }
    return d;
  }
};

/// Modal value of each covariate within `rows`, ties to the smallest value.
inline Eigen::VectorXd modal_profile(const SurvivalDataset &data, const std::vector<Eigen::Index> &rows) {
  Eigen::VectorXd p(data.n_coef());
  for (Eigen::Index j = 0; j < data.n_coef(); ++j) {
    std::map<double, int> count;
    for (Eigen::Index i : rows) ++count[data.X(i, j)];
    int best = -1;
    for (const auto &[v, c] : count) {
      if (c > best) {
        best = c;
        p[j] = v;
      }
    }
  }
  return p;
}

/// Model survival at each group's modal covariate profile (grouping column
/// set to the group value) on `points` equally spaced times in [0, max t],
/// paired with the group's Kaplan-Meier curve.
inline std::vector<SfOverlay> fitted_sf_overlay(const FitResult &fit, const SurvivalDataset &data,
                                                const std::string &group_by, int points = 200) {
  require_maximum(fit);
  if (points < 2) throw DomainError("fitted_sf_overlay: need at least two grid points");
  const Eigen::Index col = data.column(group_by);
  const double tmax = data.t.maxCoeff();
  std::vector<SfOverlay> out;
  for (double g : group_levels(data, col)) {
    const std::vector<Eigen::Index> rows = rows_with(data, col, g);
    SfOverlay o;
    o.level = g;
    o.label = group_by + "=" + format_level(g);
    o.profile = modal_profile(data, rows);
    o.profile[col] = g;
    o.cure_fraction = cure_fraction(o.profile, fit.estimates.beta);
    o.grid = Eigen::VectorXd::LinSpaced(points, 0.0, tmax);
    o.model_sf.resize(points);
    for (int k = 0; k < points; ++k) o.model_sf[k] = s_pop(o.grid[k], o.profile, fit.estimates);
    o.km = km_curve(data, rows, o.label);
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace nbbp
