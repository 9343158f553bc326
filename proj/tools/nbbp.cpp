// nbbp: fit, diagnose and simulate negative binomial beta prime cure rate
// models from CSV data. Fit reports are JSON; tables are CSV with a leading
// "# nbbp <version> ..." line carrying the command and seed.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nbbp/csv_io.hpp"
#include "nbbp/fit.hpp"
#include "nbbp/influence.hpp"
#include "nbbp/residual_km.hpp"
#include "nbbp/simulate.hpp"

using nlohmann::ordered_json;
using namespace nbbp;

namespace {

struct RunConfig {
  std::string command;
  std::string input;
  std::string output;  // empty: standard output
  std::vector<std::string> families{"nbbp"};
  std::uint64_t seed = kDefaultSeed;
  std::vector<std::string> covariates;
  std::string group_by;
  std::vector<std::string> schemes{"caseweight"};
  std::string block = "all";
  std::vector<std::string> drops;
  std::string rc_output;
  std::string preset = "table1-s1";
  std::vector<int> sizes{200};
  int reps = 500;
  int threads = 1;
  int points = 200;
  bool no_model = false;
  std::string sample_output;
  std::vector<std::string> reports;
};

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

ordered_json jnum(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex(const std::string &s) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used, 16);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw InvalidData("malformed data fingerprint '" + s + "'");
  return v;
}

std::string banner(const RunConfig &c) {
  return "# nbbp " + std::string(NBBP_VERSION) + " command=" + c.command + " seed=" + std::to_string(c.seed) + "\n";
}

void emit(const RunConfig &c, const std::string &text) {
  if (c.output.empty()) {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream out(c.output, std::ios::binary);
  if (!out) throw IoError("cannot open '" + c.output + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + c.output + "' failed");
}

std::vector<std::string> split_list(const std::string &s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// "88,174" -> {87, 173}: case numbers on the command line are 1-based.
std::vector<Eigen::Index> parse_cases(const std::string &s, Eigen::Index n) {
  std::vector<Eigen::Index> out;
  for (const std::string &item : split_list(s)) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw DomainError("--drop: '" + item + "' is not a case number");
    if (v < 1 || v > n) throw DomainError("--drop: case " + item + " is outside 1.." + std::to_string(n));
    out.push_back(static_cast<Eigen::Index>(v - 1));
  }
  return out;
}

std::string case_list(const std::vector<Eigen::Index> &cases, const char *sep = " ") {
  std::string s;
  for (std::size_t i = 0; i < cases.size(); ++i) s += (i ? sep : "") + std::to_string(cases[i] + 1);
  return s;
}

SurvivalDataset load(const RunConfig &c) {
  if (c.input.empty()) throw DomainError("--input is required");
  if (c.covariates.empty()) return load_csv(c.input);
  return load_csv(c.input, c.covariates);
}

FitResult fit_family(const SurvivalDataset &d, const std::string &family, std::uint64_t seed) {
  return fit_ml(d, FamilySpec::parse(family), std::nullopt, seed);
}

const std::string &single_family(const RunConfig &c) {
  if (c.families.size() != 1) throw DomainError("--family may be given once for '" + c.command + "'");
  return c.families.front();
}

ordered_json fit_json(const RunConfig &c, const FitResult &f, const SurvivalDataset &d,
                      const std::vector<Eigen::Index> &dropped) {
  ordered_json j;
  j["tool"] = "nbbp";
  j["version"] = NBBP_VERSION;
  j["command"] = "fit";
  j["seed"] = c.seed;
  j["input"] = c.input;
  j["family"] = f.family.name();
  j["status"] = to_string(f.status);
  j["converged"] = f.converged;
  j["message"] = f.message;
  j["n"] = f.n;
  j["events"] = d.n_events();
  j["dropped"] = ordered_json::array();
  for (Eigen::Index i : dropped) j["dropped"].push_back(i + 1);
  j["k"] = f.k;
  j["loglik"] = jnum(f.loglik);
  j["aic"] = jnum(f.aic);
  j["bic"] = jnum(f.bic);
  j["grad_norm"] = jnum(f.grad_norm);
  j["n_eval"] = f.n_eval;
  j["data_fingerprint"] = hex(f.data_fingerprint);
  if (auto a = f.fixed_alpha()) j["fixed_alpha"] = *a;
  ordered_json params = ordered_json::array();
  const Eigen::Index off = f.layout.beta_offset();
  for (Eigen::Index p = 0; p < f.k; ++p) {
    ordered_json row;
    row["name"] = f.names[static_cast<std::size_t>(p)];
    row["estimate"] = jnum(f.theta[p]);
    row["se"] = jnum(p < f.se.size() ? f.se[p] : std::nan(""));
    if (p >= off && static_cast<std::size_t>(p - off) < f.wald.size()) {
      const WaldTest &w = f.wald[static_cast<std::size_t>(p - off)];
      row["z"] = jnum(w.z);
      row["p"] = jnum(w.p);
    } else {
      row["z"] = nullptr;
      row["p"] = nullptr;
    }
    params.push_back(row);
  }
  j["parameters"] = params;
  ordered_json cov = ordered_json::array();
  for (Eigen::Index r = 0; r < f.covariance.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index s = 0; s < f.covariance.cols(); ++s) row.push_back(jnum(f.covariance(r, s)));
    cov.push_back(row);
  }
  j["covariance"] = cov;
  return j;
}

int cmd_fit(const RunConfig &c) {
  SurvivalDataset d = load(c);
  if (c.drops.size() > 1) throw DomainError("fit accepts a single --drop set");
  std::vector<Eigen::Index> dropped;
  if (!c.drops.empty()) {
    dropped = parse_cases(c.drops.front(), d.size());
    d = d.without(dropped);
  }
  const FitResult f = fit_family(d, single_family(c), c.seed);
  emit(c, fit_json(c, f, d, dropped).dump(2) + "\n");
  return f.status == FitStatus::Failed ? static_cast<int>(ErrorKind::NonConvergence) : 0;
}

PerturbationScheme parse_scheme(const std::string &s, const SurvivalDataset &d) {
  if (s == "caseweight" || s == "case-weight") return PerturbationScheme::case_weight();
  if (s == "response") return PerturbationScheme::response();
  const std::string prefix = "covariate:";
  if (s.rfind(prefix, 0) == 0) {
    const Eigen::Index k = d.column(s.substr(prefix.size()));
    if (k == 0) throw DomainError("--scheme: the intercept cannot be perturbed");
    return PerturbationScheme::covariate_of(k);
  }
  throw DomainError("unknown scheme '" + s + "' (expected caseweight, response or covariate:<name>)");
}

std::string scheme_label(const PerturbationScheme &s, const SurvivalDataset &d) {
  return s.kind == PerturbationKind::Covariate ? "covariate:" + d.names[static_cast<std::size_t>(s.covariate)] : s.name();
}

std::string rc_table(const RunConfig &c, const std::vector<CaseDeletion> &sets) {
  std::string out = banner(c);
  out += "cases,status,parameter,estimate,estimate_deleted,rc_estimate_pct,se,se_deleted,rc_se_pct,p_deleted\n";
  for (const CaseDeletion &cd : sets) {
    const std::string cases = "\"" + case_list(cd.cases, ",") + "\"";
    if (cd.rows.empty()) {
      out += cases + "," + to_string(cd.status) + ",NA,NA,NA,NA,NA,NA,NA,NA\n";
      continue;
    }
    for (const RelativeChange &r : cd.rows) {
      out += cases + "," + to_string(cd.status) + "," + r.name + "," + num(r.estimate) + "," + num(r.estimate_deleted) +
             "," + num(r.rc_estimate) + "," + num(r.se) + "," + num(r.se_deleted) + "," + num(r.rc_se) + "," +
             num(r.p_value_deleted) + "\n";
    }
  }
  return out;
}

int cmd_influence(const RunConfig &c) {
  const SurvivalDataset d = load(c);
  const FitResult f = fit_family(d, single_family(c), c.seed);
  require_maximum(f);
  const ParamBlock block = parse_block(c.block);
  std::string head = banner(c);
  head += "# family=" + f.family.name() + " status=" + to_string(f.status) + " block=" + to_string(block) + "\n";
  std::string body = "scheme,case,C,d_max,flagged\n";
  for (const std::string &name : c.schemes) {
    const PerturbationScheme scheme = parse_scheme(name, d);
    const InfluenceReport r = curvature(f, d, scheme, block);
    const std::string label = scheme_label(scheme, d);
    head += "# scheme=" + label + " threshold=" + num(r.threshold) + " flagged=" + case_list(r.flagged) + "\n";
    const std::set<Eigen::Index> flagged(r.flagged.begin(), r.flagged.end());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      body += label + "," + std::to_string(i + 1) + "," + num(r.C[i]) + "," + num(r.d_max[i]) + "," +
              (flagged.count(i) ? "1" : "0") + "\n";
    }
  }
  std::string text = head + body;
  if (!c.drops.empty()) {
    std::vector<std::vector<Eigen::Index>> sets;
    for (const std::string &s : c.drops) sets.push_back(parse_cases(s, d.size()));
    const std::string rc = rc_table(c, case_deletion_rc(f, d, sets));
    if (c.rc_output.empty()) {
      text += "\n" + rc;
    } else {
      RunConfig rc_cfg = c;
      rc_cfg.output = c.rc_output;
      emit(rc_cfg, rc);
    }
  }
  emit(c, text);
  return 0;
}

int cmd_residuals(const RunConfig &c) {
  const SurvivalDataset d = load(c);
  const FitResult f = fit_family(d, single_family(c), c.seed);
  const ResidualSet rs = rq_residuals(f, d, c.seed);
  std::string out = banner(c);
  out += "# family=" + f.family.name() + " status=" + to_string(f.status) + " sets=" + std::to_string(kResidualSets) + "\n";
  out += "rank,theoretical,empirical,case,residual\n";
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    out += std::to_string(i + 1) + "," + num(rs.theoretical[i]) + "," + num(rs.empirical[i]) + "," +
           std::to_string(i + 1) + "," + num(rs.r[i]) + "\n";
  }
  emit(c, out);
  return 0;
}

int cmd_km(const RunConfig &c) {
  const SurvivalDataset d = load(c);
  const std::optional<std::string> group = c.group_by.empty() ? std::nullopt : std::optional(c.group_by);
  std::string out = banner(c);
  std::string body = "curve,group,time,surv,at_risk,events\n";
  auto km_rows = [&](const KMCurve &km) {
    const std::string g = km.label.value_or("all");
    body += "km," + g + ",0,1," + std::to_string(km.n) + ",0\n";
    for (std::size_t k = 0; k < km.time.size(); ++k) {
      body += "km," + g + "," + num(km.time[k]) + "," + num(km.surv[k]) + "," + std::to_string(km.at_risk[k]) + "," +
              std::to_string(km.events[k]) + "\n";
    }
  };
  if (!group || c.no_model) {
    for (const KMCurve &km : km_estimate(d, group)) km_rows(km);
    out += "# model=none\n";
  } else {
    const FitResult f = fit_family(d, single_family(c), c.seed);
    out += "# family=" + f.family.name() + " status=" + to_string(f.status) + "\n";
    for (const SfOverlay &o : fitted_sf_overlay(f, d, *group, c.points)) {
      out += "# group=" + o.label + " cure_fraction=" + num(o.cure_fraction) + " sup_distance=" +
             num(o.sup_distance(f.estimates)) + "\n";
      km_rows(o.km);
      for (Eigen::Index k = 0; k < o.grid.size(); ++k) {
        body += "model," + o.label + "," + num(o.grid[k]) + "," + num(o.model_sf[k]) + ",NA,NA\n";
      }
    }
  }
  emit(c, out + body);
  return 0;
}

int cmd_simulate(const RunConfig &c) {
  if (c.sizes.empty()) throw DomainError("--n needs at least one sample size");
  std::string out = banner(c);
  out += "# preset=" + c.preset + " reps=" + std::to_string(c.reps) + " family=" + single_family(c) + "\n";
  out += "n,parameter,truth,mean,sd,bias,mse,censoring_pct,used,boundary,failed,censor_a,censor_b\n";
  for (int n : c.sizes) {
    SimConfig cfg = preset_config(c.preset, n, c.reps, c.seed);
    cfg.threads = c.threads;
    cfg.family = FamilySpec::parse(single_family(c));
    if (!c.sample_output.empty() && n == c.sizes.front()) save_csv(c.sample_output, draw_sample(cfg, 0));
    const MCReport r = mc_study(cfg);
    for (const ParamSummary &p : r.params) {
      out += std::to_string(n) + "," + p.name + "," + num(p.truth) + "," + num(p.mean) + "," + num(p.sd) + "," +
             num(p.bias) + "," + num(p.mse) + "," + num(r.censoring_pct) + "," + std::to_string(r.n_used) + "," +
             std::to_string(r.n_boundary) + "," + std::to_string(r.n_failed) + "," + num(cfg.censor_a) + "," +
             num(cfg.censor_b) + "\n";
    }
  }
  emit(c, out);
  return 0;
}

/// Rebuilds the fields model_compare needs from a fit report.
FitResult fit_from_report(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
    FitResult f;
    f.family = FamilySpec::parse(j.at("family").get<std::string>());
    f.k = j.at("k").get<int>();
    f.n = j.at("n").get<Eigen::Index>();
    f.loglik = j.at("loglik").get<double>();
    f.aic = j.at("aic").get<double>();
    f.bic = j.at("bic").get<double>();
    f.seed = j.at("seed").get<std::uint64_t>();
    f.data_fingerprint = parse_hex(j.at("data_fingerprint").get<std::string>());
    return f;
  } catch (const ordered_json::exception &e) {
    throw InvalidData("'" + path + "' is not a fit report: " + e.what());
  }
}

int cmd_compare(const RunConfig &c) {
  std::vector<FitResult> fits;
  if (!c.reports.empty()) {
    if (!c.input.empty()) throw DomainError("compare takes either fit reports or --input, not both");
    for (const std::string &p : c.reports) fits.push_back(fit_from_report(p));
  } else {
    const SurvivalDataset d = load(c);
    for (const std::string &fam : c.families) {
      FitResult f = fit_family(d, fam, c.seed);
      require_maximum(f);
      fits.push_back(std::move(f));
    }
  }
  const ModelComparison mc = model_compare(fits);
  std::string out = banner(c);
  out += "criterion,rank,family,k,loglik,aic,bic,delta\n";
  auto rows = [&](const char *crit, const std::vector<ModelRank> &v, bool aic) {
    for (std::size_t r = 0; r < v.size(); ++r) {
      const ModelRank &m = v[r];
      out += std::string(crit) + "," + std::to_string(r + 1) + "," + m.family + "," + std::to_string(m.k) + "," +
             num(m.loglik) + "," + num(m.aic) + "," + num(m.bic) + "," + num(aic ? m.delta_aic : m.delta_bic) + "\n";
    }
  };
  rows("aic", mc.by_aic, true);
  rows("bic", mc.by_bic, false);
  emit(c, out);
  return 0;
}

int dispatch(const RunConfig &c) {
  if (c.command == "fit") return cmd_fit(c);
  if (c.command == "influence") return cmd_influence(c);
  if (c.command == "residuals") return cmd_residuals(c);
  if (c.command == "km") return cmd_km(c);
  if (c.command == "simulate") return cmd_simulate(c);
  if (c.command == "compare") return cmd_compare(c);
  throw DomainError("unknown command '" + c.command + "'");
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Negative binomial beta prime cure rate models"};
  app.set_version_flag("--version", std::string("nbbp ") + NBBP_VERSION);
  app.require_subcommand(1);
  RunConfig cfg;
  std::string covariates;

  auto common = [&](CLI::App *sub, bool data, bool family) {
    if (data) {
      sub->add_option("-i,--input", cfg.input, "CSV with time, status and covariate columns")->check(CLI::ExistingFile);
      sub->add_option("--covariates", covariates, "comma-separated covariate columns (default: all others)");
    }
    sub->add_option("-o,--output", cfg.output, "output path (default: standard output)");
    sub->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    if (family) {
      sub->add_option("--family", cfg.families, "nbbp, mbp, promotion or fixed-alpha=<v>")->capture_default_str();
    }
  };

  CLI::App *fit = app.add_subcommand("fit", "maximum likelihood fit, JSON report");
  common(fit, true, true);
  fit->add_option("--drop", cfg.drops, "1-based case numbers removed before fitting, comma-separated");

  CLI::App *infl = app.add_subcommand("influence", "local influence curvatures and case deletion");
  common(infl, true, true);
  infl->add_option("--scheme", cfg.schemes, "caseweight, response or covariate:<name> (repeatable)")->capture_default_str();
  infl->add_option("--block", cfg.block, "all, alpha, xi or beta")->capture_default_str();
  infl->add_option("--drop", cfg.drops, "case-deletion set, comma-separated 1-based cases (repeatable)");
  infl->add_option("--rc-output", cfg.rc_output, "path for the relative-change table");

  CLI::App *res = app.add_subcommand("residuals", "randomized quantile residuals and QQ pairs");
  common(res, true, true);

  CLI::App *km = app.add_subcommand("km", "Kaplan-Meier curves with fitted survival overlays");
  common(km, true, true);
  km->add_option("--group-by", cfg.group_by, "design column defining the groups");
  km->add_option("--points", cfg.points, "model grid points per group")->capture_default_str();
  km->add_flag("--no-model", cfg.no_model, "Kaplan-Meier curves only");

  CLI::App *sim = app.add_subcommand("simulate", "Monte Carlo study of a preset design");
  common(sim, false, true);
  sim->add_option("--preset", cfg.preset, "table1-s1 or table1-s2")->capture_default_str();
  sim->add_option("--n", cfg.sizes, "sample sizes (repeatable)")->delimiter(',')->capture_default_str();
  sim->add_option("--reps", cfg.reps, "replicates per sample size")->capture_default_str();
  sim->add_option("--threads", cfg.threads, "worker threads")->capture_default_str();
  sim->add_option("--sample-output", cfg.sample_output, "write replicate 0 of the first size as CSV");

  CLI::App *cmp = app.add_subcommand("compare", "AIC/BIC ranking of fit reports or families");
  common(cmp, true, true);
  cmp->add_option("reports", cfg.reports, "fit reports written by 'nbbp fit'");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (CLI::App *sub : {fit, infl, res, km, sim, cmp}) {
      if (sub->parsed()) cfg.command = sub->get_name();
    }
    if (cfg.command == "compare" && cmp->count("--family") == 0) cfg.families = {"nbbp", "mbp"};
    if (!covariates.empty()) cfg.covariates = split_list(covariates);
    return dispatch(cfg);
  } catch (const Error &e) {
    std::cerr << "nbbp: error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception &e) {
    std::cerr << "nbbp: error: " << e.what() << "\n";
    return 1;
  }
}
