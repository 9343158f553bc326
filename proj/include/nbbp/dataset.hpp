#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nbbp/errors.hpp"

namespace nbbp {

/// Right-censored observations t_i = min(y_i, c_i), delta_i = 1[y_i <= c_i],
/// with a design matrix whose first column is the intercept.
struct SurvivalDataset {
  Eigen::VectorXd t;
  std::vector<int> delta;
  Eigen::MatrixXd X;
  std::vector<std::string> names;  // one label per column of X

  Eigen::Index size() const { return t.size(); }
  Eigen::Index n_coef() const { return X.cols(); }

  Eigen::Index n_events() const {
    return static_cast<Eigen::Index>(std::count(delta.begin(), delta.end(), 1));
  }

  Eigen::Index column(const std::string &name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw MissingColumn(name);
    return static_cast<Eigen::Index>(it - names.begin());
  }

  void validate() const {
    const Eigen::Index n = t.size();
    if (static_cast<Eigen::Index>(delta.size()) != n || X.rows() != n) {
      throw DimensionMismatch("dataset: t, delta and X must have the same number of rows");
    }
    if (static_cast<Eigen::Index>(names.size()) != X.cols()) {
      throw DimensionMismatch("dataset: one name per design column is required");
    }
    if (n == 0) throw InvalidData("dataset: no observations");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(t[i] >= 0.0) || !std::isfinite(t[i])) {
        throw InvalidData("dataset: time at row " + std::to_string(i + 1) + " must be finite and >= 0");
      }
      if (delta[i] != 0 && delta[i] != 1) {
        throw InvalidData("dataset: status at row " + std::to_string(i + 1) + " must be 0 or 1");
      }
      if (delta[i] == 1 && t[i] == 0.0) {
        throw InvalidData("dataset: event at time 0 in row " + std::to_string(i + 1));
      }
    }
    if (!X.allFinite()) throw InvalidData("dataset: non-finite covariate value");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) throw InvalidData("dataset: design matrix is not of full column rank");
  }

  /// Rows in the given order.
  SurvivalDataset rows(const std::vector<Eigen::Index> &idx) const {
    SurvivalDataset out;
    out.t.resize(static_cast<Eigen::Index>(idx.size()));
    out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
    out.delta.resize(idx.size());
    out.names = names;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const Eigen::Index i = idx[r];
      if (i < 0 || i >= size()) throw DomainError("dataset: row index out of range");
      out.t[static_cast<Eigen::Index>(r)] = t[i];
      out.delta[r] = delta[i];
      out.X.row(static_cast<Eigen::Index>(r)) = X.row(i);
    }
    return out;
  }

  SurvivalDataset without(const std::vector<Eigen::Index> &drop) const {
    const std::set<Eigen::Index> dropped(drop.begin(), drop.end());
    for (Eigen::Index i : dropped) {
      if (i < 0 || i >= size()) throw DomainError("dataset: case index out of range");
    }
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < size(); ++i) {
      if (!dropped.count(i)) keep.push_back(i);
    }
    return rows(keep);
  }

  /// FNV-1a over dimensions and raw values; identifies "the same data".
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void *p, std::size_t len) {
      const auto *b = static_cast<const unsigned char *>(p);
      for (std::size_t i = 0; i < len; ++i) {
        h ^= b[i];
        h *= 1099511628211ULL;
      }
    };
    const std::int64_t dims[2] = {static_cast<std::int64_t>(X.rows()),
                                  static_cast<std::int64_t>(X.cols())};
    mix(dims, sizeof dims);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double v = t[i];
      mix(&v, sizeof v);
      const int d = delta[static_cast<std::size_t>(i)];
      mix(&d, sizeof d);
      for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double x = X(i, j);
        mix(&x, sizeof x);
      }
    }
    return h;
  }
};

}  // namespace nbbp
