// Library walk-through: simulate, fit, test, diagnose.

#include <cstdio>

#include "nbbp/nbbp.hpp"

int main() {
  using namespace nbbp;

  const SimConfig cfg = preset_config("table1-s1", 500, 1, 11);
  const SurvivalDataset data = draw_sample(cfg, 0);
  std::printf("n = %ld, censored = %.1f%%, window U(%.2f, %.3f)\n", static_cast<long>(data.size()),
              100.0 * (1.0 - static_cast<double>(data.n_events()) / static_cast<double>(data.size())), cfg.censor_a,
              cfg.censor_b);

  const FitResult nb = fit_ml(data);
  const FitResult mbp = fit_ml(data, FamilySpec::mbp());
  std::printf("nbbp: %s, loglik %.3f, AIC %.3f\n", to_string(nb.status), nb.loglik, nb.aic);
  for (Eigen::Index j = 0; j < nb.k; ++j) {
    std::printf("  %-16s %9.4f (%.4f)\n", nb.names[static_cast<std::size_t>(j)].c_str(), nb.theta[j], nb.se[j]);
  }
  for (const WaldTest &w : nb.wald) std::printf("  Wald %-12s z = %6.3f, p = %.4f\n", w.name.c_str(), w.z, w.p);
  for (const ModelRank &m : model_compare({nb, mbp}).by_aic) {
    std::printf("AIC rank: %-6s %.3f (delta %.3f)\n", m.family.c_str(), m.aic, m.delta_aic);
  }

  const InfluenceReport cw = curvature(nb, data, PerturbationScheme::case_weight());
  std::printf("case-weight threshold %.4f, %zu cases flagged\n", cw.threshold, cw.flagged.size());
  if (!cw.flagged.empty()) {
    const CaseDeletion cd = case_deletion_rc(nb, data, std::vector<Eigen::Index>{cw.flagged.front()});
    for (const RelativeChange &rc : cd.rows) {
      std::printf("  drop #%ld: %-16s RC %.2f%%\n", static_cast<long>(cw.flagged.front() + 1), rc.name.c_str(),
                  rc.rc_estimate);
    }
  }

  const ResidualSet rs = rq_residuals(nb, data);
  std::printf("residual mean %.3f\n", rs.r.mean());
  for (const SfOverlay &o : fitted_sf_overlay(nb, data, "x")) {
    std::printf("%s: cure fraction %.3f, sup |S_model - S_KM| %.3f\n", o.label.c_str(), o.cure_fraction,
                o.sup_distance(nb.estimates));
  }
}
