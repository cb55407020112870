#pragma once

// Solver-independent first-order optimality residuals. Everything here is
// recomputed from the problem data and the returned primal-dual pair, with
// no reuse of solver internals, so tests can hold the solvers to an
// external standard: residual = max of stationarity, primal feasibility
// violation, dual nonnegativity violation, and complementarity.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "hop/constraints.hpp"
#include "hop/qcqp.hpp"
#include "hop/qp.hpp"

namespace hop {

namespace detail {

inline double linear_kkt_terms(const LinearConstraintSystem& cons, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& eq_dual, const Eigen::VectorXd& in_dual,
                               Eigen::VectorXd& stat) {
  double res = 0.0;
  if (cons.eq_rows() > 0) {
    stat += cons.eq_a.transpose() * eq_dual;
    res = std::max(res, (cons.eq_a * x - cons.eq_b).cwiseAbs().maxCoeff());
  }
  if (cons.in_rows() > 0) {
    stat += cons.in_a.transpose() * in_dual;
    const Eigen::VectorXd slack = cons.in_b - cons.in_a * x;
    res = std::max(res, std::max(0.0, -slack.minCoeff()));          // primal violation
    res = std::max(res, std::max(0.0, -in_dual.minCoeff()));        // dual sign
    res = std::max(res, in_dual.cwiseProduct(slack).cwiseAbs().maxCoeff());  // complementarity
  }
  return res;
}

}  // namespace detail

/// Residual of (x, duals) for min (1/2)x'Qx + q'x over the constraint system.
inline double qp_kkt_residual(const QpProblem& p, const SubsolverResult& r) {
  Eigen::VectorXd stat = p.quad_cost * r.x + p.lin_cost;
  const double lin = detail::linear_kkt_terms(p.cons, r.x, r.eq_dual, r.in_dual, stat);
  return std::max(lin, stat.cwiseAbs().maxCoeff());
}

/// Residual of (x, duals) for min c'x over the constraint system.
inline double lp_kkt_residual(const Eigen::VectorXd& cost, const LinearConstraintSystem& cons,
                              const SubsolverResult& r) {
  Eigen::VectorXd stat = cost;
  const double lin = detail::linear_kkt_terms(cons, r.x, r.eq_dual, r.in_dual, stat);
  return std::max(lin, stat.cwiseAbs().maxCoeff());
}

/// Residual of (x, duals) for the quadratically constrained problem.
inline double qcqp_kkt_residual(const QcqpProblem& p, const SubsolverResult& r) {
  Eigen::VectorXd stat = p.quad_cost * r.x + p.lin_cost;
  double res = 0.0;
  for (std::size_t i = 0; i < p.quads.size(); ++i) {
    const double lambda = r.quad_dual[static_cast<Eigen::Index>(i)];
    const double f = p.quads[i].value(r.x);
    stat += lambda * p.quads[i].gradient(r.x);
    res = std::max(res, std::max(0.0, f));         // primal violation
    res = std::max(res, std::max(0.0, -lambda));   // dual sign
    res = std::max(res, std::abs(lambda * f));     // complementarity
  }
  const double lin = detail::linear_kkt_terms(p.cons, r.x, r.eq_dual, r.in_dual, stat);
  return std::max({res, lin, stat.cwiseAbs().maxCoeff()});
}

}  // namespace hop
