#pragma once

// Dense convex quadratic programming by a Mehrotra-style predictor-corrector
// interior-point method:
//
//   minimize   (1/2) x'Qx + q'x
//   subject to eq_a x  = eq_b
//              in_a x <= in_b
//
// with Q positive semidefinite. Inequalities carry slacks s >= 0 with
// multipliers z >= 0; each iteration factors the reduced KKT system
//   [ Q + G' diag(z/s) G   A' ] [dx]   once per iteration and reuses the
//   [ A                    0  ] [dy]   factorization for the corrector.
//
// Linear programs reuse the same path with a vanishing quadratic term.
// Failure classification: an iterate escaping to norm > unbounded_threshold
// reports `unbounded`; otherwise a stalled run re-solves an elastic
// feasibility program (minimal total constraint relaxation) to distinguish
// `infeasible` from a plain `max_iter`.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "hop/constraints.hpp"
#include "hop/types.hpp"

namespace hop {

enum class SolveStatus { optimal, infeasible, unbounded, max_iter };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

struct SubsolverOptions {
  double tol = 1e-9;                  // absolute KKT residual target, on the caller's data
  int max_iter = 100;
  double unbounded_threshold = 1e10;  // iterate norm that flags divergence
  bool classify_failure = true;       // run the elastic program on stall
  std::optional<Eigen::VectorXd> x0;  // warm start / strictly feasible hint
};

struct SubsolverResult {
  Eigen::VectorXd x;
  Eigen::VectorXd eq_dual;    // multipliers of eq_a x = eq_b (free sign)
  Eigen::VectorXd in_dual;    // multipliers of in_a x <= in_b (>= 0)
  Eigen::VectorXd quad_dual;  // multipliers of quadratic constraints (>= 0)
  SolveStatus status = SolveStatus::max_iter;
  double kkt_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::vector<double> stage_objectives;  // barrier stages; empty for QP/LP
};

struct QpProblem {
  Eigen::MatrixXd quad_cost;  // Q, symmetric PSD
  Eigen::VectorXd lin_cost;   // q
  LinearConstraintSystem cons;

  double objective(const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(quad_cost * x) + lin_cost.dot(x);
  }
};

inline void validate_qp(const QpProblem& p) {
  validate_constraints(p.cons);
  const int n = p.cons.vars;
  if (p.quad_cost.rows() != n || p.quad_cost.cols() != n)
    throw DimensionError("quadratic cost size does not match variable count");
  if (p.lin_cost.size() != n) throw DimensionError("linear cost size does not match variable count");
  if (!p.quad_cost.allFinite() || !p.lin_cost.allFinite())
    throw DataError("cost has non-finite entries");
  const double scale = p.quad_cost.cwiseAbs().maxCoeff();
  if ((p.quad_cost - p.quad_cost.transpose()).cwiseAbs().maxCoeff() >
      1e-8 * std::max(1e-30, scale))
    throw DataError("quadratic cost must be symmetric");
  if (scale > 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (p.quad_cost + p.quad_cost.transpose()), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, scale))
      throw DataError("quadratic cost must be positive semidefinite");
  }
}

namespace detail {

/// Equality-only (or unconstrained) case: one regularized KKT solve.
inline SubsolverResult solve_qp_equality(const QpProblem& p, const SubsolverOptions& opts) {
  const int n = p.cons.vars;
  const int np = p.cons.eq_rows();
  const double reg = 1e-12 * std::max(1.0, p.quad_cost.cwiseAbs().maxCoeff());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + np, n + np);
  kkt.topLeftCorner(n, n) = p.quad_cost + reg * Eigen::MatrixXd::Identity(n, n);
  if (np > 0) {
    kkt.topRightCorner(n, np) = p.cons.eq_a.transpose();
    kkt.bottomLeftCorner(np, n) = p.cons.eq_a;
  }
  Eigen::VectorXd rhs(n + np);
  rhs.head(n) = -p.lin_cost;
  if (np > 0) rhs.tail(np) = p.cons.eq_b;
  Eigen::VectorXd sol = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(rhs);

  SubsolverResult r;
  r.x = sol.head(n);
  r.eq_dual = np > 0 ? Eigen::VectorXd(sol.tail(np)) : Eigen::VectorXd();
  r.in_dual = Eigen::VectorXd();
  r.iterations = 1;
  double stat = (p.quad_cost * r.x + p.lin_cost +
                 (np > 0 ? Eigen::VectorXd(p.cons.eq_a.transpose() * r.eq_dual)
                         : Eigen::VectorXd::Zero(n)))
                    .cwiseAbs()
                    .maxCoeff();
  double pfeas = np > 0 ? (p.cons.eq_a * r.x - p.cons.eq_b).cwiseAbs().maxCoeff() : 0.0;
  r.kkt_residual = std::max(stat, pfeas);
  const double accept = std::max(opts.tol, 1e-7 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
  if (!r.x.allFinite() || r.x.cwiseAbs().maxCoeff() > opts.unbounded_threshold)
    r.status = SolveStatus::unbounded;
  else if (r.kkt_residual <= accept)
    r.status = SolveStatus::optimal;
  else if (pfeas > accept)
    r.status = SolveStatus::infeasible;  // inconsistent equalities
  else
    r.status = SolveStatus::unbounded;  // singular curvature along feasible directions
  return r;
}

inline SubsolverResult solve_qp_impl(const QpProblem& p, const SubsolverOptions& opts,
                                     bool allow_classify);

/// Row multipliers applied to the constraint system plus the scalar applied to
/// both cost terms. Solving the scaled problem leaves x unchanged; multipliers
/// of scaled rows relate to the caller's rows by z = z_scaled * row / cost.
struct QpScaling {
  Eigen::VectorXd eq_row;
  Eigen::VectorXd in_row;
  double cost = 1.0;
};

/// Scale every constraint row to unit max magnitude and the cost block to
/// unit max magnitude, in place. Interior-point termination tests are
/// magnitude comparisons, so problems assembled from data on very different
/// scales (covariance entries near 1e-4 against simplex rows of ones) stall
/// without this.
inline QpScaling equilibrate_qp(QpProblem& p) {
  QpScaling sc;
  const int np = p.cons.eq_rows();
  const int m = p.cons.in_rows();
  sc.eq_row.resize(np);
  sc.in_row.resize(m);
  auto factor = [](double magnitude) {
    if (!(magnitude > 0.0)) return 1.0;
    return std::clamp(1.0 / magnitude, 1e-8, 1e8);
  };
  for (int r = 0; r < np; ++r) {
    const double f = factor(p.cons.eq_a.row(r).cwiseAbs().maxCoeff());
    p.cons.eq_a.row(r) *= f;
    p.cons.eq_b[r] *= f;
    sc.eq_row[r] = f;
  }
  for (int r = 0; r < m; ++r) {
    const double f = factor(p.cons.in_a.row(r).cwiseAbs().maxCoeff());
    p.cons.in_a.row(r) *= f;
    p.cons.in_b[r] *= f;
    sc.in_row[r] = f;
  }
  const double qmax = p.quad_cost.size() > 0 ? p.quad_cost.cwiseAbs().maxCoeff() : 0.0;
  const double lmax = p.lin_cost.size() > 0 ? p.lin_cost.cwiseAbs().maxCoeff() : 0.0;
  sc.cost = factor(std::max(qmax, lmax));
  p.quad_cost *= sc.cost;
  p.lin_cost *= sc.cost;
  return sc;
}

/// Absolute KKT residual of (x, y, z) on the caller's (unscaled) data:
/// stationarity, primal feasibility, complementarity, and multiplier signs.
inline double qp_kkt_residual(const QpProblem& p, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& y, const Eigen::VectorXd& z) {
  if (!x.allFinite()) return std::numeric_limits<double>::infinity();
  const int np = p.cons.eq_rows();
  const int m = p.cons.in_rows();
  Eigen::VectorXd stat = p.quad_cost * x + p.lin_cost;
  if (np > 0 && y.size() == np) stat += p.cons.eq_a.transpose() * y;
  if (m > 0 && z.size() == m) stat += p.cons.in_a.transpose() * z;
  double res = stat.cwiseAbs().maxCoeff();
  if (np > 0) res = std::max(res, (p.cons.eq_a * x - p.cons.eq_b).cwiseAbs().maxCoeff());
  if (m > 0) {
    const Eigen::VectorXd slack = p.cons.in_b - p.cons.in_a * x;
    res = std::max(res, std::max(0.0, -slack.minCoeff()));
    if (z.size() == m) {
      res = std::max(res, z.cwiseProduct(slack).cwiseAbs().maxCoeff());
      res = std::max(res, std::max(0.0, -z.minCoeff()));
    }
  }
  return res;
}

/// Minimal total relaxation needed to satisfy the constraints; decides
/// between `infeasible` and `max_iter` after a stalled solve.
inline SolveStatus classify_stall(const LinearConstraintSystem& cons) {
  const int n = cons.vars;
  const int np = cons.eq_rows();
  const int m = cons.in_rows();
  const int extra = m + 2 * np;
  if (extra == 0) return SolveStatus::max_iter;
  ConstraintBuilder b(n + extra);
  // in_a x - e <= in_b, e >= 0
  for (int r = 0; r < m; ++r) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n + extra);
    row.head(n) = cons.in_a.row(r);
    row[n + r] = -1.0;
    b.add_in(row, cons.in_b[r]);
  }
  // eq_a x - ep <= eq_b and -eq_a x - en <= -eq_b, ep, en >= 0
  for (int r = 0; r < np; ++r) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n + extra);
    row.head(n) = cons.eq_a.row(r);
    row[n + m + r] = -1.0;
    b.add_in(row, cons.eq_b[r]);
    row.head(n) = -cons.eq_a.row(r);
    row[n + m + r] = 0.0;
    row[n + m + np + r] = -1.0;
    b.add_in(row, -cons.eq_b[r]);
  }
  for (int i = 0; i < extra; ++i) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n + extra);
    row[n + i] = -1.0;
    b.add_in(row, 0.0);
  }
  QpProblem elastic;
  elastic.cons = b.build();
  elastic.quad_cost = 1e-12 * Eigen::MatrixXd::Identity(n + extra, n + extra);
  elastic.lin_cost = Eigen::VectorXd::Zero(n + extra);
  elastic.lin_cost.tail(extra).setOnes();
  SubsolverOptions eopts;
  eopts.tol = 1e-9;
  eopts.max_iter = 200;
  SubsolverResult er = solve_qp_impl(elastic, eopts, /*allow_classify=*/false);
  if (er.status != SolveStatus::optimal) return SolveStatus::max_iter;
  const double scale =
      1.0 + (np > 0 ? cons.eq_b.cwiseAbs().maxCoeff() : 0.0) +
      (m > 0 ? cons.in_b.cwiseAbs().maxCoeff() : 0.0);
  return er.x.tail(extra).sum() > 1e-7 * scale ? SolveStatus::infeasible : SolveStatus::max_iter;
}

inline SubsolverResult solve_qp_impl(const QpProblem& p, const SubsolverOptions& opts,
                                     bool allow_classify) {
  const int n = p.cons.vars;
  const int np = p.cons.eq_rows();
  const int m = p.cons.in_rows();
  if (m == 0) return solve_qp_equality(p, opts);

  const Eigen::MatrixXd& Q = p.quad_cost;
  const Eigen::VectorXd& q = p.lin_cost;
  const Eigen::MatrixXd& A = p.cons.eq_a;
  const Eigen::VectorXd& b = p.cons.eq_b;
  const Eigen::MatrixXd& G = p.cons.in_a;
  const Eigen::VectorXd& h = p.cons.in_b;

  // Starting point: regularized equality KKT solve (or the caller's hint),
  // slacks shifted into the strict interior, unit multipliers.
  Eigen::VectorXd x;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(np);
  if (opts.x0 && opts.x0->size() == n && opts.x0->allFinite()) {
    x = *opts.x0;
  } else {
    const double reg = 1e-8 * std::max(1.0, Q.cwiseAbs().maxCoeff());
    Eigen::MatrixXd init = Eigen::MatrixXd::Zero(n + np, n + np);
    init.topLeftCorner(n, n) = Q + reg * Eigen::MatrixXd::Identity(n, n);
    if (np > 0) {
      init.topRightCorner(n, np) = A.transpose();
      init.bottomLeftCorner(np, n) = A;
      init.bottomRightCorner(np, np) = -reg * Eigen::MatrixXd::Identity(np, np);
    }
    Eigen::VectorXd rhs(n + np);
    rhs.head(n) = -q;
    if (np > 0) rhs.tail(np) = b;
    Eigen::VectorXd sol = Eigen::FullPivLU<Eigen::MatrixXd>(init).solve(rhs);
    if (sol.allFinite()) {
      x = sol.head(n);
      if (np > 0) y = sol.tail(np);
    } else {
      x = Eigen::VectorXd::Zero(n);
    }
  }
  Eigen::VectorXd sbar = h - G * x;
  const double shift = std::max(0.0, -1.5 * sbar.minCoeff());
  Eigen::VectorXd s = sbar.array() + (shift + 1.0);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(m);

  SubsolverResult r;
  r.status = SolveStatus::max_iter;
  Eigen::MatrixXd kkt(n + np, n + np);
  Eigen::VectorXd rhs(n + np);

  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    const Eigen::VectorXd r_d = Q * x + q + (np > 0 ? Eigen::VectorXd(A.transpose() * y)
                                                    : Eigen::VectorXd::Zero(n)) +
                                G.transpose() * z;
    const Eigen::VectorXd r_p = np > 0 ? Eigen::VectorXd(A * x - b) : Eigen::VectorXd();
    const Eigen::VectorXd r_g = G * x + s - h;
    const double mu = s.dot(z) / m;
    const double ineq_viol = std::max(0.0, (G * x - h).maxCoeff());
    const double res = std::max({r_d.cwiseAbs().maxCoeff(),
                                 np > 0 ? r_p.cwiseAbs().maxCoeff() : 0.0,
                                 r_g.cwiseAbs().maxCoeff(), ineq_viol,
                                 s.cwiseProduct(z).cwiseAbs().maxCoeff()});
    r.kkt_residual = res;
    if (res <= opts.tol) {
      r.status = SolveStatus::optimal;
      break;
    }
    if (x.cwiseAbs().maxCoeff() > opts.unbounded_threshold) {
      r.status = SolveStatus::unbounded;
      break;
    }

    const Eigen::VectorXd d = z.cwiseQuotient(s);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = Q + G.transpose() * d.asDiagonal() * G;
    if (np > 0) {
      kkt.topRightCorner(n, np) = A.transpose();
      kkt.bottomLeftCorner(np, n) = A;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) {
      // tiny proximal term restores invertibility on degenerate instances
      kkt.topLeftCorner(n, n) +=
          1e-10 * std::max(1.0, Q.cwiseAbs().maxCoeff()) * Eigen::MatrixXd::Identity(n, n);
      lu.compute(kkt);
    }

    auto solve_direction = [&](const Eigen::VectorXd& rc) {
      // rc is the target of S dz + Z ds = -rc (componentwise).
      rhs.head(n) = -r_d - G.transpose() * ((z.cwiseProduct(r_g) - rc).cwiseQuotient(s));
      if (np > 0) rhs.tail(np) = -r_p;
      Eigen::VectorXd sol = lu.solve(rhs);
      sol += lu.solve(rhs - kkt * sol);  // one refinement pass
      struct Dir {
        Eigen::VectorXd dx, dy, ds, dz;
      } dir;
      dir.dx = sol.head(n);
      dir.dy = np > 0 ? Eigen::VectorXd(sol.tail(np)) : Eigen::VectorXd();
      dir.ds = -r_g - G * dir.dx;
      dir.dz = -(rc + z.cwiseProduct(dir.ds)).cwiseQuotient(s);
      return dir;
    };

    auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
      double a = 1.0;
      for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
      return a;
    };

    // Predictor (affine scaling) step.
    auto aff = solve_direction(s.cwiseProduct(z));
    const double a_aff =
        std::min(max_step(s, aff.ds), max_step(z, aff.dz));
    const double mu_aff =
        (s + a_aff * aff.ds).dot(z + a_aff * aff.dz) / m;
    double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3) : 0.0;
    sigma = std::clamp(sigma, 0.0, 1.0);

    // Corrector with centering.
    const Eigen::VectorXd rc =
        (s.cwiseProduct(z).array() - sigma * mu).matrix() + aff.ds.cwiseProduct(aff.dz);
    auto dir = solve_direction(rc);

    const double eta = 0.995;
    const double a_p = std::min(1.0, eta * max_step(s, dir.ds));
    const double a_d = std::min(1.0, eta * max_step(z, dir.dz));
    x += a_p * dir.dx;
    s += a_p * dir.ds;
    z += a_d * dir.dz;
    if (np > 0) y += a_d * dir.dy;
    if (!x.allFinite() || !s.allFinite() || !z.allFinite()) {
      r.status = SolveStatus::max_iter;
      break;
    }
  }

  r.x = x;
  r.eq_dual = y;
  r.in_dual = z;
  r.iterations = iter;
  if (r.status == SolveStatus::max_iter && allow_classify) {
    if (x.cwiseAbs().maxCoeff() > 0.01 * opts.unbounded_threshold)
      r.status = SolveStatus::unbounded;
    else if (opts.classify_failure)
      r.status = classify_stall(p.cons);
  }
  return r;
}

}  // namespace detail

inline SubsolverResult solve_qp(const QpProblem& p, const SubsolverOptions& opts = {}) {
  validate_qp(p);
  QpProblem scaled = p;
  const detail::QpScaling sc = detail::equilibrate_qp(scaled);
  // Termination happens on the scaled data, where every residual component
  // shrinks by a known factor: stationarity and complementarity by the cost
  // factor, each feasibility row by its own row factor.  Dividing the target
  // by the worst of those ratios makes "tol" mean what it says on the
  // caller's data, down to the rounding floor of the scaled system.
  double inflation = 1.0 / sc.cost;
  for (Eigen::Index i = 0; i < sc.eq_row.size(); ++i)
    inflation = std::max(inflation, 1.0 / sc.eq_row[i]);
  for (Eigen::Index i = 0; i < sc.in_row.size(); ++i)
    inflation = std::max(inflation, 1.0 / sc.in_row[i]);
  SubsolverOptions iopts = opts;
  iopts.tol = std::max(opts.tol / std::max(1.0, inflation),
                       1e2 * std::numeric_limits<double>::epsilon());
  SubsolverResult r = detail::solve_qp_impl(scaled, iopts, /*allow_classify=*/true);
  if (r.eq_dual.size() == sc.eq_row.size())
    r.eq_dual = r.eq_dual.cwiseProduct(sc.eq_row) / sc.cost;
  if (r.in_dual.size() == sc.in_row.size())
    r.in_dual = r.in_dual.cwiseProduct(sc.in_row) / sc.cost;
  r.kkt_residual = detail::qp_kkt_residual(p, r.x, r.eq_dual, r.in_dual);
  // Settle the label against the caller's own target on the caller's own
  // data, so `optimal` is exactly "kkt_residual <= tol".  Infeasible and
  // unbounded classifications are statements about the problem, not the
  // iterate, and stand as issued.
  if (r.status == SolveStatus::optimal && r.kkt_residual > opts.tol)
    r.status = SolveStatus::max_iter;
  else if (r.status == SolveStatus::max_iter && r.kkt_residual <= opts.tol)
    r.status = SolveStatus::optimal;
  return r;
}

/// Linear program min c'x over the same constraint form, solved through the
/// quadratic path with a vanishing curvature term.
inline SubsolverResult solve_lp(const Eigen::VectorXd& cost, const LinearConstraintSystem& cons,
                                const SubsolverOptions& opts = {}) {
  QpProblem p;
  p.cons = cons;
  p.quad_cost = 1e-12 * Eigen::MatrixXd::Identity(cons.vars, cons.vars);
  p.lin_cost = cost;
  return solve_qp(p, opts);
}

}  // namespace hop
