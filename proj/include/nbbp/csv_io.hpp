#pragma once

// Comma-separated survival data: a header row naming the columns, `time`
// and `status` (1 = event, 0 = censored) required, every other column (or
// the requested subset) a numeric covariate. An intercept is prepended.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nbbp/dataset.hpp"
#include "nbbp/errors.hpp"

namespace nbbp {

namespace detail {

inline std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string unquote(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_fields(const std::string &line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(unquote(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool blank(const std::string &line) { return trim(line).empty(); }

/// Strict decimal parse of the whole field; nullopt for missing or junk.
inline std::optional<double> parse_number(const std::string &field) {
  if (field.empty()) return std::nullopt;
  const char *b = field.data();
  const char *e = b + field.size();
  if (*b == '+') ++b;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses CSV text; `source` names the input in error messages. Line
/// numbers count from 1 at the header.
inline SurvivalDataset parse_csv(std::istream &in, const std::string &source,
                                 const std::optional<std::vector<std::string>> &covariates = std::nullopt) {
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (!have_header && std::getline(in, line)) {
    ++lineno;
    have_header = !detail::blank(line);
  }
  if (!have_header) throw EmptyFile(source);
  if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line = line.substr(3);
  const std::vector<std::string> header = detail::split_fields(line);
  const std::size_t width = header.size();

  auto find = [&](const std::string &name) -> std::size_t {
    for (std::size_t j = 0; j < width; ++j) {
      if (header[j] == name) return j;
    }
    throw MissingColumn(name);
  };
  for (std::size_t a = 0; a < width; ++a) {
    if (header[a].empty()) throw InvalidData("line " + std::to_string(lineno) + ": empty column name");
    for (std::size_t b = a + 1; b < width; ++b) {
      if (header[a] == header[b]) throw InvalidData("line " + std::to_string(lineno) + ": duplicate column '" + header[a] + "'");
    }
  }
  const std::size_t jt = find("time"), js = find("status");
  std::vector<std::size_t> cov;
  if (covariates) {
    for (const std::string &c : *covariates) {
      const std::size_t j = find(c);
      if (j == jt || j == js) throw DomainError("column '" + c + "' cannot be a covariate");
      cov.push_back(j);
    }
  } else {
    for (std::size_t j = 0; j < width; ++j) {
      if (j != jt && j != js) cov.push_back(j);
    }
  }
  for (std::size_t j : cov) {
    if (header[j] == "intercept") throw InvalidData("column name 'intercept' is reserved");
  }

  std::vector<double> t;
  std::vector<int> delta;
  std::vector<std::vector<double>> x;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    const std::vector<std::string> f = detail::split_fields(line);
    if (f.size() != width) {
      throw InvalidData("line " + std::to_string(lineno) + ": expected " + std::to_string(width) + " fields, found " +
                        std::to_string(f.size()));
    }
    auto number = [&](std::size_t j) {
      const auto v = detail::parse_number(f[j]);
      if (!v) {
        throw NonNumeric(lineno, f[j].empty() || f[j] == "NA" ? "missing value in column '" + header[j] + "'"
                                                             : "non-numeric value '" + f[j] + "' in column '" + header[j] + "'");
      }
      return *v;
    };
    const double ti = number(jt);
    if (ti < 0.0) throw InvalidData("line " + std::to_string(lineno) + ": time must be >= 0");
    const double si = number(js);
    if (si != 0.0 && si != 1.0) {
      throw InvalidData("line " + std::to_string(lineno) + ": status must be 0 or 1, found '" + f[js] + "'");
    }
    if (si == 1.0 && ti == 0.0) throw InvalidData("line " + std::to_string(lineno) + ": event at time 0");
    std::vector<double> row;
    row.reserve(cov.size());
    for (std::size_t j : cov) row.push_back(number(j));
    t.push_back(ti);
    delta.push_back(static_cast<int>(si));
    x.push_back(std::move(row));
  }
  if (t.empty()) throw EmptyFile(source);

  SurvivalDataset d;
  const auto n = static_cast<Eigen::Index>(t.size());
  d.t = Eigen::Map<const Eigen::VectorXd>(t.data(), n);
  d.delta = std::move(delta);
  d.X.resize(n, static_cast<Eigen::Index>(cov.size()) + 1);
  d.names = {"intercept"};
  for (std::size_t j : cov) d.names.push_back(header[j]);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    for (std::size_t j = 0; j < cov.size(); ++j) d.X(i, static_cast<Eigen::Index>(j) + 1) = x[static_cast<std::size_t>(i)][j];
  }
  return d;
}

inline SurvivalDataset load_csv(const std::string &path,
                                const std::optional<std::vector<std::string>> &covariates = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return parse_csv(in, path, covariates);
}

/// Writes time, status and the non-intercept columns with round-trip precision.
inline void write_csv(std::ostream &out, const SurvivalDataset &d) {
  out << "time,status";
  for (std::size_t j = 1; j < d.names.size(); ++j) out << ',' << d.names[j];
  out << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", d.t[i]);
    out << buf << ',' << d.delta[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 1; j < d.n_coef(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", d.X(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

inline void save_csv(const std::string &path, const SurvivalDataset &d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(out, d);
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace nbbp
