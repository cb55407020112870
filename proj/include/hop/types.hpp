#pragma once

// Domain types shared across the library: error categories, the returns
// panel, the budget-and-leverage feasible set and the four risk-preference
// weights of the mean-variance-skewness-kurtosis objective.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace hop {

/// Input shapes or sizes are unusable (too few periods, mismatched
/// dimensions, empty panels).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input values are unusable (non-finite cells, malformed numbers, corrupt
/// or truncated files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A request would exceed a configured resource guard.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// T x N panel of simple per-period returns; column j belongs to tickers[j].
struct ReturnsMatrix {
  Eigen::MatrixXd values;            ///< rows = periods, cols = assets
  std::vector<std::string> tickers;  ///< one name per column

  int assets() const { return static_cast<int>(values.cols()); }
  int periods() const { return static_cast<int>(values.rows()); }
};

/// Throws DimensionError / DataError unless the panel has N >= 1 assets,
/// T >= 2 periods, a matching ticker list and all-finite cells.
inline void validate_returns(const ReturnsMatrix& r) {
  if (r.assets() < 1) throw DimensionError("returns panel has no assets");
  if (r.periods() < 2)
    throw DimensionError("returns panel needs at least 2 periods, got " +
                         std::to_string(r.periods()));
  if (static_cast<int>(r.tickers.size()) != r.assets())
    throw DimensionError("ticker list size " + std::to_string(r.tickers.size()) +
                         " does not match asset count " + std::to_string(r.assets()));
  for (int t = 0; t < r.periods(); ++t)
    for (int j = 0; j < r.assets(); ++j)
      if (!std::isfinite(r.values(t, j)))
        throw DataError("non-finite return at period " + std::to_string(t + 1) +
                        ", asset " + std::to_string(j + 1));
}

/// Feasible portfolio set {w : 1'w = 1, ||w||_1 <= leverage}, leverage >= 1.
struct FeasibleSet {
  int assets = 0;
  double leverage = 1.0;

  /// Largest constraint residual of w (0 inside the set).
  double violation(const Eigen::VectorXd& w) const {
    double budget = std::abs(w.sum() - 1.0);
    double lev = std::max(0.0, w.lpNorm<1>() - leverage);
    return std::max(budget, lev);
  }

  bool contains(const Eigen::VectorXd& w, double tol = 1e-9) const {
    return w.size() == assets && violation(w) <= tol;
  }
};

inline void validate_feasible_set(const FeasibleSet& fs) {
  if (fs.assets < 1) throw DimensionError("feasible set needs at least one asset");
  if (!(fs.leverage >= 1.0) || !std::isfinite(fs.leverage))
    throw DataError("leverage must be finite and >= 1, got " + std::to_string(fs.leverage));
}

/// Nonnegative weights of the four portfolio moments in the objective
///   f(w) = -l1*phi1 + l2*phi2 - l3*phi3 + l4*phi4.
struct MvskSpec {
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  double lambda4 = 0.0;
};

inline void validate_mvsk_spec(const MvskSpec& s) {
  for (double l : {s.lambda1, s.lambda2, s.lambda3, s.lambda4})
    if (!std::isfinite(l) || l < 0.0)
      throw DataError("moment weights must be finite and nonnegative");
}

/// Moment weights induced by constant relative risk aversion xi > 0:
/// (1, xi/2, xi(xi+1)/6, xi(xi+1)(xi+2)/24).
inline MvskSpec crra_lambdas(double xi) {
  if (!(xi > 0.0) || !std::isfinite(xi))
    throw DataError("risk aversion must be finite and positive, got " + std::to_string(xi));
  MvskSpec s;
  s.lambda1 = 1.0;
  s.lambda2 = xi / 2.0;
  s.lambda3 = xi * (xi + 1.0) / 6.0;
  s.lambda4 = xi * (xi + 1.0) * (xi + 2.0) / 24.0;
  return s;
}

}  // namespace hop
