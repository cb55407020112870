#pragma once

// Synthetic returns generator: r_t = mu + B z_t with iid standardized
// shocks z.  Each shock is a shifted, scaled gamma variable whose
// skewness equals the `skew` control exactly (excess kurtosis 1.5*skew^2
// follows); skew = 0 switches to plain normal shocks.  The mixing matrix
// B = Q1 diag(s) Q2' has a geometric singular-value profile with condition
// number `cond` and is rescaled so per-asset volatilities average 2% per
// period.
//
// Determinism: one mt19937_64 stream seeded from `seed`, consumed in a
// fixed order (means, first rotation, second rotation, then shocks period
// by period).  Repeated runs with equal specs produce identical panels.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "hop/types.hpp"

namespace hop {

struct SyntheticSpec {
  int assets = 0;      ///< N, at least 2
  int periods = 0;     ///< T; 0 or negative selects the default 5N
  std::uint64_t seed = 1;
  double skew = 1.0;   ///< shock skewness; 0 gives symmetric normal shocks
  double cond = 10.0;  ///< condition number of the mixing matrix, >= 1
};

/// The period count a spec resolves to (applies the 5N default).
inline int synthetic_periods(const SyntheticSpec& s) {
  return s.periods > 0 ? s.periods : 5 * s.assets;
}

inline void validate_synthetic_spec(const SyntheticSpec& s) {
  if (s.assets < 2)
    throw DimensionError("synthetic panel needs at least 2 assets, got " +
                         std::to_string(s.assets));
  const int t = synthetic_periods(s);
  if (t < s.assets)
    throw DimensionError("synthetic panel needs periods >= assets, got " + std::to_string(t) +
                         " periods for " + std::to_string(s.assets) + " assets");
  if (!std::isfinite(s.skew)) throw DataError("shock skewness must be finite");
  if (!(s.cond >= 1.0) || !std::isfinite(s.cond))
    throw DataError("mixing condition number must be finite and >= 1, got " +
                    std::to_string(s.cond));
}

namespace detail {

/// Orthogonal factor of a Gaussian matrix with the sign convention that
/// makes the QR factorization unique (positive R diagonal), so the result
/// is a deterministic function of the input.
inline Eigen::MatrixXd haar_rotation(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace detail

/// Generate the T x N panel described by the spec.  Tickers are "A1".."AN",
/// zero-padded to a common width.
inline ReturnsMatrix generate_returns(const SyntheticSpec& spec) {
  validate_synthetic_spec(spec);
  const int n = spec.assets;
  const int t = synthetic_periods(spec);
  std::mt19937_64 rng(spec.seed);

  Eigen::VectorXd mu(n);
  std::uniform_real_distribution<double> mean_draw(2e-4, 1.2e-3);
  for (int j = 0; j < n; ++j) mu[j] = mean_draw(rng);

  const Eigen::MatrixXd q1 = detail::haar_rotation(rng, n);
  const Eigen::MatrixXd q2 = detail::haar_rotation(rng, n);
  Eigen::VectorXd sv(n);
  for (int i = 0; i < n; ++i)
    sv[i] = std::pow(spec.cond, -static_cast<double>(i) / static_cast<double>(n - 1));
  Eigen::MatrixXd mix = q1 * sv.asDiagonal() * q2.transpose();
  const double vol = 0.02;  // average per-asset volatility per period
  mix *= vol * std::sqrt(static_cast<double>(n)) / mix.norm();

  ReturnsMatrix r;
  r.values.resize(t, n);
  const int width = static_cast<int>(std::to_string(n).size());
  for (int j = 0; j < n; ++j) {
    std::string num = std::to_string(j + 1);
    r.tickers.push_back("A" + std::string(width - static_cast<int>(num.size()), '0') + num);
  }

  Eigen::VectorXd z(n);
  if (spec.skew == 0.0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int p = 0; p < t; ++p) {
      for (int j = 0; j < n; ++j) z[j] = gauss(rng);
      r.values.row(p) = (mu + mix * z).transpose();
    }
  } else {
    // Gamma(k, 1) standardized to zero mean and unit variance has skewness
    // 2/sqrt(k); k = 4/skew^2 and a sign flip hit the control exactly.
    const double shape = 4.0 / (spec.skew * spec.skew);
    const double flip = spec.skew < 0.0 ? -1.0 : 1.0;
    std::gamma_distribution<double> gamma(shape, 1.0);
    for (int p = 0; p < t; ++p) {
      for (int j = 0; j < n; ++j) z[j] = flip * (gamma(rng) - shape) / std::sqrt(shape);
      r.values.row(p) = (mu + mix * z).transpose();
    }
  }
  return r;
}

}  // namespace hop
