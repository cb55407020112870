#pragma once

// Curvature bounds for the majorization solvers and the Frobenius-nearest
// positive-semidefinite projection.
//
// Both bounds dominate spectral radii through the induced infinity norm of
// the relevant Hessian, using |w_i| <= ||w||_1 <= L on the feasible set:
//
//   dc_tau >= max over feasible w of rho(d2 f(w)),     f the full objective
//   mm_tau >= max over feasible w of rho(d2 f_ncvx(w)), the order-3/4 part
//
// dc_tau bounds each slice contraction by the full absolute row sums of the
// flattened tensors; mm_tau applies Hoelder (max x l1) inside each slice and
// is therefore never larger than the high-order part of dc_tau.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "hop/moments.hpp"
#include "hop/types.hpp"

namespace hop {

/// Majorization constant of the difference-of-convex splitting:
///   2 l2 ||sigma||_inf + 6 l3 L max_i sum_{j,k} |phi_ijk|
///                      + 12 l4 L^2 max_i sum_{j,k,l} |psi_ijkl|.
inline double dc_tau(const MomentSet& m, const MvskSpec& spec, double leverage) {
  validate_mvsk_spec(spec);
  if (!(leverage >= 1.0)) throw DataError("leverage must be >= 1");
  const double sig = m.covariance().cwiseAbs().rowwise().sum().maxCoeff();
  const double phi = m.coskewness().cwiseAbs().rowwise().sum().maxCoeff();
  const double psi = m.cokurtosis().cwiseAbs().rowwise().sum().maxCoeff();
  return 2.0 * spec.lambda2 * sig + 6.0 * spec.lambda3 * leverage * phi +
         12.0 * spec.lambda4 * leverage * leverage * psi;
}

/// Majorization constant of the order-3/4 remainder:
///   6 l3 L max_i sum_k max_j |phi_ijk| + 12 l4 L^2 max_i sum_k max_{j,l} |psi_ijkl|.
/// For supersymmetric tensors the roles of the summed and maxed trailing
/// indices are interchangeable.
inline double mm_tau(const MomentSet& m, const MvskSpec& spec, double leverage) {
  validate_mvsk_spec(spec);
  if (!(leverage >= 1.0)) throw DataError("leverage must be >= 1");
  const int n = m.size();

  double phi_part = 0.0;
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int k = 0; k < n; ++k)
      row += m.phi_block(k).row(i).cwiseAbs().maxCoeff();
    phi_part = std::max(phi_part, row);
  }
  double psi_part = 0.0;
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int k = 0; k < n; ++k)
      row += m.psi_block(k).row(i).cwiseAbs().maxCoeff();
    psi_part = std::max(psi_part, row);
  }
  return 6.0 * spec.lambda3 * leverage * phi_part +
         12.0 * spec.lambda4 * leverage * leverage * psi_part;
}

/// Frobenius-nearest PSD matrix: eigendecompose the symmetrized input, clamp
/// negative eigenvalues at exactly zero, reassemble, re-symmetrize.
inline Eigen::MatrixXd nearest_psd(const Eigen::MatrixXd& h) {
  if (h.rows() != h.cols()) throw DimensionError("nearest_psd needs a square matrix");
  if (!h.allFinite()) throw DataError("nearest_psd input has non-finite entries");
  const double scale = h.norm();
  if ((h - h.transpose()).norm() > 1e-8 * std::max(1e-30, scale))
    throw DataError("nearest_psd input is not symmetric within 1e-8 relative");

  Eigen::MatrixXd sym = 0.5 * (h + h.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd out =
      es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace hop
