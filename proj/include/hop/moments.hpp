#pragma once

// Sample moment tensors of asset returns up to fourth order in the flattened
// Kronecker layout, portfolio moment values, and the gradients / Hessians of
// the third- and fourth-order portfolio moments.
//
// Layout. With rt = r - mu the centered return vector and N assets:
//
//   sigma (N x N)  : sigma(i, j)              = E[rt_i rt_j]
//   phi   (N x N^2): phi(i, k*N + j)          = E[rt_i rt_j rt_k]
//   psi   (N x N^3): psi(i, k*N^2 + l*N + j)  = E[rt_i rt_j rt_k rt_l]
//
// i.e. phi = E[rt (rt' kron rt')], psi = E[rt (rt' kron rt' kron rt')], and
// columns [k*N, (k+1)*N) of phi form the k-th N x N slice of the co-skewness
// tensor. Both tensors are supersymmetric: permuting (i, j, k[, l]) in the
// index maps above reaches the same stored value bit for bit, because the
// estimator computes each unique index combination once and scatters it to
// every permutation.
//
// Portfolio moments of a weight vector w:
//   phi1 = w'mu            phi2 = w'sigma w
//   phi3 = w'phi (w kron w)        phi4 = w'psi (w kron w kron w)
//
// Derivatives follow the slice form of the Hessians,
//   H3(w) = d2 phi3 = 6 [phi_1 w, ..., phi_N w]
//   H4(w) = d2 phi4 = 12 [psi_1 (w kron w), ..., psi_N (w kron w)]
// and the gradients are recovered by the Euler-type contractions
//   d phi3 = H3(w) w / 2,   d phi4 = H4(w) w / 3,
// which keeps the cost of a full derivative bundle at O(N^4).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>

#include "hop/types.hpp"

namespace hop {

struct EstimateOptions {
  /// Guard on the N^4-sized cokurtosis allocation (8 N^4 bytes).
  int max_assets = 150;
};

/// Immutable bundle of sample moments (mu, sigma, phi, psi) of one panel.
/// All member matrices use the layout documented at the top of this header.
class MomentSet {
 public:
  MomentSet() = default;

  /// Takes ownership of explicitly supplied tensors. Shapes are validated;
  /// the content is trusted to be supersymmetric.
  MomentSet(Eigen::VectorXd mu, Eigen::MatrixXd sigma, Eigen::MatrixXd phi,
            Eigen::MatrixXd psi)
      : n_(static_cast<int>(mu.size())),
        mu_(std::move(mu)),
        sigma_(std::move(sigma)),
        phi_(std::move(phi)),
        psi_(std::move(psi)) {
    const auto n = static_cast<Eigen::Index>(n_);
    if (n < 1) throw DimensionError("moment set needs at least one asset");
    if (sigma_.rows() != n || sigma_.cols() != n ||
        phi_.rows() != n || phi_.cols() != n * n ||
        psi_.rows() != n || psi_.cols() != n * n * n)
      throw DimensionError("moment tensor shapes are inconsistent");
  }

  /// Divisor-T sample moments of a returns panel. Cost O(N^4 T / 24) plus
  /// the N^4 scatter; single-threaded and deterministic.
  static MomentSet estimate(const ReturnsMatrix& returns,
                            const EstimateOptions& opts = {});

  int size() const { return n_; }
  const Eigen::VectorXd& mean() const { return mu_; }
  const Eigen::MatrixXd& covariance() const { return sigma_; }
  const Eigen::MatrixXd& coskewness() const { return phi_; }
  const Eigen::MatrixXd& cokurtosis() const { return psi_; }

  /// k-th N x N slice of the co-skewness tensor, k in [0, N).
  auto phi_block(int k) const { return phi_.middleCols(static_cast<Eigen::Index>(k) * n_, n_); }
  /// k-th N x N^2 slice of the co-kurtosis tensor, k in [0, N).
  auto psi_block(int k) const {
    return psi_.middleCols(static_cast<Eigen::Index>(k) * n_ * n_, static_cast<Eigen::Index>(n_) * n_);
  }

 private:
  int n_ = 0;
  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd phi_;
  Eigen::MatrixXd psi_;
};

inline MomentSet MomentSet::estimate(const ReturnsMatrix& returns,
                                     const EstimateOptions& opts) {
  validate_returns(returns);
  const int n = returns.assets();
  const int t = returns.periods();
  if (n > opts.max_assets) {
    const double gib = 8.0 * std::pow(static_cast<double>(n), 4.0) / (1024.0 * 1024.0 * 1024.0);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "cokurtosis tensor for %d assets needs %.2f GiB (N^4 doubles); "
                  "guard is max_assets=%d",
                  n, gib, opts.max_assets);
    throw ResourceError(buf);
  }

  const double inv_t = 1.0 / static_cast<double>(t);
  Eigen::VectorXd mu = returns.values.colwise().mean();
  Eigen::MatrixXd x = returns.values.rowwise() - mu.transpose();

  const auto nn = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd sigma(nn, nn);
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(nn, nn * nn);
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(nn, nn * nn * nn);

  const auto n2 = nn * nn;
  auto scatter3 = [&](int i, int j, int k, double v) {
    std::array<Eigen::Index, 3> p{i, j, k};
    do {
      phi(p[0], p[1] * nn + p[2]) = v;
    } while (std::next_permutation(p.begin(), p.end()));
  };
  auto scatter4 = [&](int i, int j, int k, int l, double v) {
    std::array<Eigen::Index, 4> p{i, j, k, l};
    do {
      psi(p[0], p[1] * n2 + p[2] * nn + p[3]) = v;
    } while (std::next_permutation(p.begin(), p.end()));
  };

  Eigen::VectorXd pij(t), pijk(t);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      pij = x.col(i).cwiseProduct(x.col(j));
      const double sij = pij.sum() * inv_t;
      sigma(i, j) = sij;
      sigma(j, i) = sij;
      for (int k = j; k < n; ++k) {
        pijk = pij.cwiseProduct(x.col(k));
        scatter3(i, j, k, pijk.sum() * inv_t);
        for (int l = k; l < n; ++l)
          scatter4(i, j, k, l, pijk.dot(x.col(l)) * inv_t);
      }
    }
  }
  return MomentSet(std::move(mu), std::move(sigma), std::move(phi), std::move(psi));
}

namespace detail {

inline void check_weights(const Eigen::VectorXd& w, const MomentSet& m) {
  if (w.size() != m.size())
    throw DimensionError("weight vector size " + std::to_string(w.size()) +
                         " does not match moment set size " + std::to_string(m.size()));
  if (!w.allFinite()) throw DataError("weight vector has non-finite entries");
}

/// w kron w as a length-N^2 vector, (w kron w)(a*N + b) = w_a w_b.
inline Eigen::VectorXd kron_ww(const Eigen::VectorXd& w) {
  const auto n = w.size();
  Eigen::VectorXd k(n * n);
  Eigen::Map<Eigen::MatrixXd>(k.data(), n, n) = w * w.transpose();
  return k;
}

}  // namespace detail

/// Hessian of phi3 at w: column i is 6 * phi_i w. Exactly symmetric for
/// supersymmetric phi. Cost O(N^3).
inline Eigen::MatrixXd hess_phi3(const Eigen::VectorXd& w, const MomentSet& m) {
  detail::check_weights(w, m);
  const int n = m.size();
  Eigen::MatrixXd h(n, n);
  for (int i = 0; i < n; ++i) h.col(i) = 6.0 * (m.phi_block(i) * w);
  return h;
}

/// Hessian of phi4 at w: column i is 12 * psi_i (w kron w). Exactly symmetric
/// for supersymmetric psi. Cost O(N^4).
inline Eigen::MatrixXd hess_phi4(const Eigen::VectorXd& w, const MomentSet& m) {
  detail::check_weights(w, m);
  const int n = m.size();
  const Eigen::VectorXd kw = detail::kron_ww(w);
  Eigen::MatrixXd h(n, n);
  for (int i = 0; i < n; ++i) h.col(i) = 12.0 * (m.psi_block(i) * kw);
  return h;
}

/// Gradient of phi3 via the half-contraction of the Hessian.
inline Eigen::VectorXd grad_phi3(const Eigen::VectorXd& w, const MomentSet& m) {
  return 0.5 * (hess_phi3(w, m) * w);
}

/// Gradient of phi4 via the third-contraction of the Hessian.
inline Eigen::VectorXd grad_phi4(const Eigen::VectorXd& w, const MomentSet& m) {
  return (hess_phi4(w, m) * w) / 3.0;
}

/// First four moments of portfolio w.
struct PortfolioMoments {
  double phi1 = 0.0;  ///< mean
  double phi2 = 0.0;  ///< variance
  double phi3 = 0.0;  ///< third central moment
  double phi4 = 0.0;  ///< fourth central moment
};

inline PortfolioMoments portfolio_moments(const Eigen::VectorXd& w, const MomentSet& m) {
  detail::check_weights(w, m);
  const int n = m.size();
  PortfolioMoments pm;
  pm.phi1 = w.dot(m.mean());
  pm.phi2 = w.dot(m.covariance() * w);
  const Eigen::VectorXd kw = detail::kron_ww(w);
  double p3 = 0.0, p4 = 0.0;
  for (int k = 0; k < n; ++k) {
    p3 += w[k] * w.dot(m.phi_block(k) * w);
    p4 += w[k] * w.dot(m.psi_block(k) * kw);
  }
  pm.phi3 = p3;
  pm.phi4 = p4;
  return pm;
}

/// One-pass derivative bundle for the iterative solvers: both Hessians, the
/// gradients by contraction, and the third/fourth moment values by a further
/// Euler contraction (w'd phi3 = 3 phi3, w'd phi4 = 4 phi4). Cost O(N^4).
struct MomentDerivatives {
  double phi3 = 0.0;
  double phi4 = 0.0;
  Eigen::MatrixXd hess3;
  Eigen::MatrixXd hess4;
  Eigen::VectorXd grad3;
  Eigen::VectorXd grad4;
};

inline MomentDerivatives moment_derivatives(const Eigen::VectorXd& w, const MomentSet& m) {
  MomentDerivatives d;
  d.hess3 = hess_phi3(w, m);
  d.hess4 = hess_phi4(w, m);
  d.grad3 = 0.5 * (d.hess3 * w);
  d.grad4 = (d.hess4 * w) / 3.0;
  d.phi3 = w.dot(d.grad3) / 3.0;
  d.phi4 = w.dot(d.grad4) / 4.0;
  return d;
}

/// Value and gradient of f(w) = -l1 phi1 + l2 phi2 - l3 phi3 + l4 phi4,
/// split into the convex part (-l1 phi1 + l2 phi2) and the difference-of-
/// convex remainder (-l3 phi3 + l4 phi4).
struct MvskValue {
  double f = 0.0;
  double f_cvx = 0.0;
  double f_ncvx = 0.0;
  Eigen::VectorXd grad;
  Eigen::VectorXd grad_ncvx;
  PortfolioMoments moments;
};

inline MvskValue mvsk_objective(const Eigen::VectorXd& w, const MomentSet& m,
                                const MvskSpec& spec) {
  validate_mvsk_spec(spec);
  const MomentDerivatives d = moment_derivatives(w, m);
  MvskValue v;
  v.moments.phi1 = w.dot(m.mean());
  v.moments.phi2 = w.dot(m.covariance() * w);
  v.moments.phi3 = d.phi3;
  v.moments.phi4 = d.phi4;
  v.f_cvx = -spec.lambda1 * v.moments.phi1 + spec.lambda2 * v.moments.phi2;
  v.f_ncvx = -spec.lambda3 * d.phi3 + spec.lambda4 * d.phi4;
  v.f = v.f_cvx + v.f_ncvx;
  v.grad_ncvx = -spec.lambda3 * d.grad3 + spec.lambda4 * d.grad4;
  v.grad = -spec.lambda1 * m.mean() + 2.0 * spec.lambda2 * (m.covariance() * w) + v.grad_ncvx;
  return v;
}

}  // namespace hop
