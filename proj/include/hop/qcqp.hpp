#pragma once

// Dense convex quadratically constrained quadratic programming by an
// infeasible-start primal-dual interior-point method:
//
//   minimize   (1/2) x'Q0 x + q0'x
//   subject to (1/2) x'Qi x + qi'x + ci <= 0   (i = 1..K, Qi PSD)
//              eq_a x  = eq_b
//              in_a x <= in_b
//
// Every inequality row (linear or quadratic) carries a slack s >= 0 with
// multiplier z >= 0. Each iteration linearizes the perturbed KKT conditions
// at the current point, factors the reduced system
//   [ Q0 + sum zi Qi + J' diag(z/s) J   A' ] [dx]
//   [ A                                 0  ] [dy]
// once (J stacks the linear rows over the constraint gradients), and reuses
// the factorization for a Mehrotra-style predictor and corrector. The method
// needs no strictly feasible starting point and tolerates feasible sets with
// empty or razor-thin interiors, which the successive-approximation layers
// above routinely produce when a constraint is active at the expansion point.
// Failure classification mirrors the quadratic-program path: diverging
// iterates report `unbounded`, and a stalled run re-solves an elastic
// feasibility program to distinguish `infeasible` from a plain `max_iter`.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hop/constraints.hpp"
#include "hop/qp.hpp"
#include "hop/types.hpp"

namespace hop {

/// One convex quadratic inequality (1/2) x'q_mat x + q_vec'x + offset <= 0.
struct QuadConstraint {
  Eigen::MatrixXd q_mat;
  Eigen::VectorXd q_vec;
  double offset = 0.0;

  double value(const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(q_mat * x) + q_vec.dot(x) + offset;
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return q_mat * x + q_vec; }
};

struct QcqpProblem {
  Eigen::MatrixXd quad_cost;  // Q0, symmetric PSD
  Eigen::VectorXd lin_cost;   // q0
  std::vector<QuadConstraint> quads;
  LinearConstraintSystem cons;

  double objective(const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(quad_cost * x) + lin_cost.dot(x);
  }
};

inline void validate_qcqp(const QcqpProblem& p) {
  QpProblem flat;
  flat.quad_cost = p.quad_cost;
  flat.lin_cost = p.lin_cost;
  flat.cons = p.cons;
  validate_qp(flat);
  const int n = p.cons.vars;
  for (const QuadConstraint& qc : p.quads) {
    if (qc.q_mat.rows() != n || qc.q_mat.cols() != n || qc.q_vec.size() != n)
      throw DimensionError("quadratic constraint size does not match variable count");
    if (!qc.q_mat.allFinite() || !qc.q_vec.allFinite() || !std::isfinite(qc.offset))
      throw DataError("quadratic constraint has non-finite entries");
    const double scale = qc.q_mat.cwiseAbs().maxCoeff();
    if ((qc.q_mat - qc.q_mat.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1e-30, scale))
      throw DataError("quadratic constraint matrix must be symmetric");
    if (scale > 0.0) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (qc.q_mat + qc.q_mat.transpose()),
                                                        Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, scale))
        throw DataError("quadratic constraint matrix must be positive semidefinite");
    }
  }
}

namespace detail {

/// Multipliers applied to the rows and cost of a scaled problem copy, the
/// quadratic rows included; x is unchanged by the scaling.
struct QcqpScaling {
  Eigen::VectorXd eq_row;
  Eigen::VectorXd in_row;
  Eigen::VectorXd quad_row;
  double cost = 1.0;
};

inline QcqpScaling equilibrate_qcqp(QcqpProblem& p) {
  QcqpScaling sc;
  auto factor = [](double magnitude) {
    if (!(magnitude > 0.0)) return 1.0;
    return std::clamp(1.0 / magnitude, 1e-8, 1e8);
  };
  {
    QpProblem flat;
    flat.quad_cost = std::move(p.quad_cost);
    flat.lin_cost = std::move(p.lin_cost);
    flat.cons = std::move(p.cons);
    const QpScaling fs = equilibrate_qp(flat);
    p.quad_cost = std::move(flat.quad_cost);
    p.lin_cost = std::move(flat.lin_cost);
    p.cons = std::move(flat.cons);
    sc.eq_row = fs.eq_row;
    sc.in_row = fs.in_row;
    sc.cost = fs.cost;
  }
  sc.quad_row.resize(static_cast<Eigen::Index>(p.quads.size()));
  for (std::size_t i = 0; i < p.quads.size(); ++i) {
    QuadConstraint& qc = p.quads[i];
    const double mag = std::max({qc.q_mat.cwiseAbs().maxCoeff(), qc.q_vec.cwiseAbs().maxCoeff(),
                                 std::abs(qc.offset)});
    const double f = factor(mag);
    qc.q_mat *= f;
    qc.q_vec *= f;
    qc.offset *= f;
    sc.quad_row[static_cast<Eigen::Index>(i)] = f;
  }
  return sc;
}

inline SubsolverResult solve_qcqp_impl(const QcqpProblem& p, const SubsolverOptions& opts,
                                       bool allow_classify);

/// Minimal total relaxation over all rows (quadratic rows included); decides
/// between `infeasible` and `max_iter` after a stalled solve. The elastic
/// program always has interior points, so the solve itself is reliable.
inline SolveStatus classify_qcqp_stall(const QcqpProblem& p) {
  const int n = p.cons.vars;
  const int np = p.cons.eq_rows();
  const int m = p.cons.in_rows();
  const int nq = static_cast<int>(p.quads.size());
  const int extra = m + nq + 2 * np;
  if (extra == 0) return SolveStatus::max_iter;
  const int nv = n + extra;

  QcqpProblem el;
  el.quad_cost = Eigen::MatrixXd::Zero(nv, nv);
  el.lin_cost = Eigen::VectorXd::Zero(nv);
  el.lin_cost.tail(extra).setOnes();
  for (int i = 0; i < nq; ++i) {
    const QuadConstraint& qc = p.quads[static_cast<std::size_t>(i)];
    QuadConstraint wide;
    wide.q_mat = Eigen::MatrixXd::Zero(nv, nv);
    wide.q_mat.topLeftCorner(n, n) = qc.q_mat;
    wide.q_vec = Eigen::VectorXd::Zero(nv);
    wide.q_vec.head(n) = qc.q_vec;
    wide.q_vec[n + m + i] = -1.0;
    wide.offset = qc.offset;
    el.quads.push_back(std::move(wide));
  }
  ConstraintBuilder b(nv);
  for (int r = 0; r < m; ++r) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
    row.head(n) = p.cons.in_a.row(r);
    row[n + r] = -1.0;
    b.add_in(row, p.cons.in_b[r]);
  }
  for (int r = 0; r < np; ++r) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
    row.head(n) = p.cons.eq_a.row(r);
    row[n + m + nq + r] = -1.0;
    b.add_in(row, p.cons.eq_b[r]);
    row.head(n) = -p.cons.eq_a.row(r);
    row[n + m + nq + r] = 0.0;
    row[n + m + nq + np + r] = -1.0;
    b.add_in(row, -p.cons.eq_b[r]);
  }
  for (int i = 0; i < extra; ++i) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
    row[n + i] = -1.0;
    b.add_in(row, 0.0);
  }
  el.cons = b.build();

  SubsolverOptions eopts;
  eopts.tol = 1e-9;
  eopts.max_iter = 150;
  SubsolverResult er = solve_qcqp_impl(el, eopts, /*allow_classify=*/false);
  if (er.status != SolveStatus::optimal) return SolveStatus::max_iter;
  double scale = 1.0;
  if (np > 0) scale += p.cons.eq_b.cwiseAbs().maxCoeff();
  if (m > 0) scale += p.cons.in_b.cwiseAbs().maxCoeff();
  for (const QuadConstraint& qc : p.quads) scale += std::abs(qc.offset);
  return er.x.tail(extra).sum() > 1e-7 * scale ? SolveStatus::infeasible : SolveStatus::max_iter;
}

inline SubsolverResult solve_qcqp_impl(const QcqpProblem& p, const SubsolverOptions& opts,
                                       bool allow_classify) {
  const int n = p.cons.vars;
  const int np = p.cons.eq_rows();
  const int m = p.cons.in_rows();
  const int nq = static_cast<int>(p.quads.size());
  const int mt = m + nq;

  const Eigen::MatrixXd& A = p.cons.eq_a;
  const Eigen::VectorXd& bvec = p.cons.eq_b;

  auto ineq_values = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd v(mt);
    if (m > 0) v.head(m) = p.cons.in_a * x - p.cons.in_b;
    for (int i = 0; i < nq; ++i) v[m + i] = p.quads[static_cast<std::size_t>(i)].value(x);
    return v;
  };
  auto ineq_jacobian = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd j(mt, n);
    if (m > 0) j.topRows(m) = p.cons.in_a;
    for (int i = 0; i < nq; ++i)
      j.row(m + i) = p.quads[static_cast<std::size_t>(i)].gradient(x).transpose();
    return j;
  };

  // Start: caller's hint (feasibility not required) or a regularized
  // equality least-squares point. Slacks absorb any violation they can.
  Eigen::VectorXd x;
  if (opts.x0 && opts.x0->size() == n && opts.x0->allFinite()) {
    x = *opts.x0;
  } else if (np > 0) {
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + np, n + np);
    kkt.topLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
    kkt.topRightCorner(n, np) = A.transpose();
    kkt.bottomLeftCorner(np, n) = A;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + np);
    rhs.tail(np) = bvec;
    Eigen::VectorXd sol = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(rhs);
    x = sol.allFinite() ? Eigen::VectorXd(sol.head(n)) : Eigen::VectorXd::Zero(n);
  } else {
    x = Eigen::VectorXd::Zero(n);
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(np);
  Eigen::VectorXd s(mt), z(mt);
  {
    const Eigen::VectorXd v0 = ineq_values(x);
    const double mu0 = 1e-1;
    for (int i = 0; i < mt; ++i) {
      s[i] = std::max(1e-3, -v0[i]);
      z[i] = std::clamp(mu0 / s[i], 1e-6, 1e6);
    }
  }

  SubsolverResult r;
  r.status = SolveStatus::max_iter;
  Eigen::MatrixXd kkt(n + np, n + np);
  Eigen::VectorXd rhs(n + np);
  double best_res = std::numeric_limits<double>::infinity();

  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    const Eigen::VectorXd val = ineq_values(x);
    const Eigen::MatrixXd jac = ineq_jacobian(x);
    const Eigen::VectorXd r_d = p.quad_cost * x + p.lin_cost +
                                (np > 0 ? Eigen::VectorXd(A.transpose() * y)
                                        : Eigen::VectorXd::Zero(n)) +
                                jac.transpose() * z;
    const Eigen::VectorXd r_p = np > 0 ? Eigen::VectorXd(A * x - bvec) : Eigen::VectorXd();
    const Eigen::VectorXd r_i = val + s;
    const Eigen::VectorXd comp = s.cwiseProduct(z);
    const double mu = mt > 0 ? comp.sum() / mt : 0.0;
    const double res = std::max({r_d.cwiseAbs().maxCoeff(),
                                 np > 0 ? r_p.cwiseAbs().maxCoeff() : 0.0,
                                 r_i.cwiseAbs().maxCoeff(), comp.cwiseAbs().maxCoeff()});
    r.kkt_residual = res;
    r.stage_objectives.push_back(p.objective(x));
    best_res = std::min(best_res, res);
    if (res <= opts.tol) {
      r.status = SolveStatus::optimal;
      break;
    }
    if (x.cwiseAbs().maxCoeff() > opts.unbounded_threshold) {
      r.status = SolveStatus::unbounded;
      break;
    }
    if (iter > 30 && res > 1e6 * best_res) break;  // diverging; let the classifier decide

    Eigen::MatrixXd h = p.quad_cost;
    for (int i = 0; i < nq; ++i) h += z[m + i] * p.quads[static_cast<std::size_t>(i)].q_mat;
    const Eigen::VectorXd d = z.cwiseQuotient(s);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = h + jac.transpose() * d.asDiagonal() * jac;
    if (np > 0) {
      kkt.topRightCorner(n, np) = A.transpose();
      kkt.bottomLeftCorner(np, n) = A;
    }
    // The block mixes curvature on the data's scale with unit slack terms;
    // symmetric equilibration keeps the factorization trustworthy.
    Eigen::VectorXd rowscale(n + np);
    for (int i = 0; i < n + np; ++i) {
      const double mx = kkt.row(i).cwiseAbs().maxCoeff();
      rowscale[i] = mx > 0.0 ? 1.0 / std::sqrt(mx) : 1.0;
    }
    Eigen::MatrixXd ks = rowscale.asDiagonal() * kkt * rowscale.asDiagonal();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ks);
    if (!lu.isInvertible()) {
      ks.diagonal().array() += 1e-12;
      lu.compute(ks);
    }

    auto solve_direction = [&](const Eigen::VectorXd& rc) {
      rhs.head(n) = -r_d + jac.transpose() * ((rc - z.cwiseProduct(r_i)).cwiseQuotient(s));
      if (np > 0) rhs.tail(np) = -r_p;
      const Eigen::VectorXd rs = rowscale.cwiseProduct(rhs);
      Eigen::VectorXd yt = lu.solve(rs);
      yt += lu.solve(rs - ks * yt);
      const Eigen::VectorXd sol = rowscale.cwiseProduct(yt);
      struct Dir {
        Eigen::VectorXd dx, dy, ds, dz;
      } dir;
      dir.dx = sol.head(n);
      dir.dy = np > 0 ? Eigen::VectorXd(sol.tail(np)) : Eigen::VectorXd();
      dir.ds = -r_i - jac * dir.dx;
      dir.dz = -(rc + z.cwiseProduct(dir.ds)).cwiseQuotient(s);
      return dir;
    };
    auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
      double a = 1.0;
      for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
      return a;
    };

    auto aff = solve_direction(comp);
    if (!aff.dx.allFinite()) break;
    const double a_aff = std::min(max_step(s, aff.ds), max_step(z, aff.dz));
    const double mu_aff = (s + a_aff * aff.ds).dot(z + a_aff * aff.dz) / std::max(1, mt);
    double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3) : 0.0;
    sigma = std::clamp(sigma, 0.0, 1.0);

    const Eigen::VectorXd rc =
        (comp.array() - sigma * mu).matrix() + aff.ds.cwiseProduct(aff.dz);
    auto dir = solve_direction(rc);
    if (!dir.dx.allFinite()) break;

    const double frac = 0.995;
    double a_p = std::min(1.0, frac * max_step(s, dir.ds));
    const double dxmax = dir.dx.cwiseAbs().maxCoeff();
    if (dxmax > 0.0)  // teleporting past the linearization's region of validity
      a_p = std::min(a_p, 1e2 * (1.0 + x.cwiseAbs().maxCoeff()) / dxmax);
    double a_d = std::min(1.0, frac * max_step(z, dir.dz));

    // Newton sees only the linearization of the quadratic rows, so accept the
    // step only if the true KKT residual stays within a generous growth
    // factor; otherwise halve both step lengths.
    bool accepted = false;
    Eigen::VectorXd xn, sn, zn, yn;
    for (int bt = 0; bt < 30; ++bt) {
      xn = x + a_p * dir.dx;
      sn = s + a_p * dir.ds;
      zn = z + a_d * dir.dz;
      yn = np > 0 ? Eigen::VectorXd(y + a_d * dir.dy) : y;
      if (xn.allFinite() && sn.allFinite() && zn.allFinite()) {
        const Eigen::VectorXd valn = ineq_values(xn);
        const Eigen::MatrixXd jacn = ineq_jacobian(xn);
        const Eigen::VectorXd rdn = p.quad_cost * xn + p.lin_cost +
                                    (np > 0 ? Eigen::VectorXd(A.transpose() * yn)
                                            : Eigen::VectorXd::Zero(n)) +
                                    jacn.transpose() * zn;
        const double resn =
            std::max({rdn.cwiseAbs().maxCoeff(),
                      np > 0 ? (A * xn - bvec).cwiseAbs().maxCoeff() : 0.0,
                      (valn + sn).cwiseAbs().maxCoeff(),
                      sn.cwiseProduct(zn).cwiseAbs().maxCoeff()});
        if (resn <= 10.0 * res + opts.tol) {
          accepted = true;
          break;
        }
      }
      a_p *= 0.5;
      a_d *= 0.5;
    }
    if (!accepted) break;  // stalled; the classifier decides what it means
    x = xn;
    s = sn;
    z = zn;
    if (np > 0) y = yn;
  }

  r.x = x;
  r.eq_dual = y;
  r.in_dual = m > 0 ? Eigen::VectorXd(z.head(m)) : Eigen::VectorXd();
  r.quad_dual = nq > 0 ? Eigen::VectorXd(z.tail(nq)) : Eigen::VectorXd();
  r.iterations = iter;

  // Endgame dual polish.  When several curved rows are active at once the
  // late Newton systems condition like diag(z/s) with s near rounding, and
  // the dual iterates stop improving even though the primal point is exact.
  // Refitting the multipliers on the near-active rows by nonnegative least
  // squares recovers the certificate whenever the point deserves one; the
  // refit is kept only if it grades better than the iterates' own duals.
  if (r.status == SolveStatus::max_iter && x.allFinite() && mt > 0) {
    const Eigen::VectorXd val = ineq_values(x);
    std::vector<int> active;
    for (int i = 0; i < mt; ++i) {
      const double scale = i < m ? std::abs(p.cons.in_b[i])
                                 : std::abs(p.quads[static_cast<std::size_t>(i - m)].offset);
      if (val[i] >= -1e-6 * (1.0 + scale)) active.push_back(i);
    }
    const int na = static_cast<int>(active.size());
    if (na + np > 0) {
      const Eigen::MatrixXd jall = ineq_jacobian(x);
      Eigen::MatrixXd jac(na + np, n);
      for (int i = 0; i < na; ++i) jac.row(i) = jall.row(active[static_cast<std::size_t>(i)]);
      if (np > 0) jac.bottomRows(np) = A;
      const Eigen::VectorXd g0 = p.quad_cost * x + p.lin_cost;
      QpProblem fit;
      fit.quad_cost = jac * jac.transpose();
      fit.quad_cost.diagonal().array() += 1e-14 * (1.0 + fit.quad_cost.cwiseAbs().maxCoeff());
      fit.lin_cost = jac * g0;
      fit.cons.vars = na + np;
      fit.cons.in_a = Eigen::MatrixXd::Zero(na, na + np);
      fit.cons.in_a.leftCols(na) = -Eigen::MatrixXd::Identity(na, na);
      fit.cons.in_b = Eigen::VectorXd::Zero(na);
      SubsolverOptions fopts;
      fopts.tol = 1e-12;
      fopts.classify_failure = false;
      const SubsolverResult fr = solve_qp(fit, fopts);
      if (fr.x.allFinite() &&
          (fr.status == SolveStatus::optimal || fr.status == SolveStatus::max_iter)) {
        Eigen::VectorXd zp = Eigen::VectorXd::Zero(mt);
        for (int i = 0; i < na; ++i)
          zp[active[static_cast<std::size_t>(i)]] = std::max(0.0, fr.x[i]);
        const Eigen::VectorXd yp = np > 0 ? Eigen::VectorXd(fr.x.tail(np)) : Eigen::VectorXd();
        // Grade the polished certificate on the true first-order measures.
        const Eigen::VectorXd stat =
            g0 + jall.transpose() * zp +
            (np > 0 ? Eigen::VectorXd(A.transpose() * yp) : Eigen::VectorXd::Zero(n));
        double res = stat.cwiseAbs().maxCoeff();
        res = std::max(res, val.cwiseMax(0.0).maxCoeff());
        if (np > 0) res = std::max(res, (A * x - bvec).cwiseAbs().maxCoeff());
        for (int i = 0; i < mt; ++i) res = std::max(res, std::abs(zp[i] * val[i]));
        if (res < r.kkt_residual) {
          r.kkt_residual = res;
          r.in_dual = m > 0 ? Eigen::VectorXd(zp.head(m)) : Eigen::VectorXd();
          r.quad_dual = nq > 0 ? Eigen::VectorXd(zp.tail(nq)) : Eigen::VectorXd();
          r.eq_dual = yp;
          if (res <= opts.tol) r.status = SolveStatus::optimal;
        }
      }
    }
  }

  if (r.status == SolveStatus::max_iter && allow_classify) {
    if (x.allFinite() && x.cwiseAbs().maxCoeff() > 0.01 * opts.unbounded_threshold)
      r.status = SolveStatus::unbounded;
    else if (opts.classify_failure)
      r.status = classify_qcqp_stall(p);
  }
  return r;
}

}  // namespace detail

inline SubsolverResult solve_qcqp(const QcqpProblem& p, const SubsolverOptions& opts = {}) {
  validate_qcqp(p);
  if (p.quads.empty()) {
    QpProblem flat;
    flat.quad_cost = p.quad_cost;
    flat.lin_cost = p.lin_cost;
    flat.cons = p.cons;
    SubsolverResult r = solve_qp(flat, opts);
    r.quad_dual = Eigen::VectorXd();
    return r;
  }

  const int n = p.cons.vars;
  const int np = p.cons.eq_rows();
  const int m = p.cons.in_rows();
  const int nq = static_cast<int>(p.quads.size());

  QcqpProblem scaled = p;
  const detail::QcqpScaling sc = detail::equilibrate_qcqp(scaled);
  SubsolverResult r = detail::solve_qcqp_impl(scaled, opts, /*allow_classify=*/true);
  if (r.eq_dual.size() == sc.eq_row.size())
    r.eq_dual = r.eq_dual.cwiseProduct(sc.eq_row) / sc.cost;
  if (r.in_dual.size() == sc.in_row.size())
    r.in_dual = r.in_dual.cwiseProduct(sc.in_row) / sc.cost;
  if (r.quad_dual.size() == sc.quad_row.size())
    r.quad_dual = r.quad_dual.cwiseProduct(sc.quad_row) / sc.cost;
  for (double& v : r.stage_objectives) v /= sc.cost;
  const Eigen::VectorXd& x = r.x;

  // Residual of a candidate dual assignment, with the primal fixed at x:
  // stationarity, complementarity, and multiplier signs (primal feasibility
  // is shared and added afterwards).
  auto dual_residual = [&](const Eigen::VectorXd& lq, const Eigen::VectorXd& lz,
                           const Eigen::VectorXd& ly) {
    Eigen::VectorXd stat = p.quad_cost * x + p.lin_cost;
    double res = 0.0;
    for (int i = 0; i < nq; ++i) {
      const QuadConstraint& qc = p.quads[static_cast<std::size_t>(i)];
      stat += lq[i] * qc.gradient(x);
      res = std::max(res, std::abs(lq[i] * qc.value(x)));
      res = std::max(res, -lq[i]);
    }
    if (m > 0) {
      stat += p.cons.in_a.transpose() * lz;
      const Eigen::VectorXd slack = p.cons.in_b - p.cons.in_a * x;
      res = std::max(res, lz.cwiseProduct(slack).cwiseAbs().maxCoeff());
      res = std::max(res, -lz.minCoeff());
    }
    if (np > 0) stat += p.cons.eq_a.transpose() * ly;
    return std::max(res, stat.cwiseAbs().maxCoeff());
  };

  // Dual polish: with the primal fixed, re-fit the multipliers of the nearly
  // active rows by nonnegative least squares. This removes the leftover
  // complementarity products of barely-active rows and costs one tiny QP.
  if (r.status == SolveStatus::optimal && x.allFinite()) {
    std::vector<int> aq, al;
    for (int i = 0; i < nq; ++i) {
      const QuadConstraint& qc = p.quads[static_cast<std::size_t>(i)];
      if (-qc.value(x) <= 1e-6 * (1.0 + std::abs(qc.offset))) aq.push_back(i);
    }
    for (int j = 0; j < m; ++j) {
      const double slack = p.cons.in_b[j] - p.cons.in_a.row(j).dot(x);
      if (slack <= 1e-6 * (1.0 + std::abs(p.cons.in_b[j]))) al.push_back(j);
    }
    const int d = static_cast<int>(aq.size() + al.size()) + np;
    if (d > 0) {
      Eigen::MatrixXd grads(d, n);
      int row = 0;
      for (int i : aq) grads.row(row++) = p.quads[static_cast<std::size_t>(i)].gradient(x);
      for (int j : al) grads.row(row++) = p.cons.in_a.row(j);
      for (int k = 0; k < np; ++k) grads.row(row++) = p.cons.eq_a.row(k);

      QpProblem ls;
      ls.cons.vars = d;
      ls.cons.eq_a.resize(0, d);
      ls.cons.eq_b.resize(0);
      const int nneg = static_cast<int>(aq.size() + al.size());
      ls.cons.in_a = Eigen::MatrixXd::Zero(nneg, d);
      for (int i = 0; i < nneg; ++i) ls.cons.in_a(i, i) = -1.0;
      ls.cons.in_b = Eigen::VectorXd::Zero(nneg);
      Eigen::MatrixXd gram = grads * grads.transpose();
      ls.quad_cost = 0.5 * (gram + gram.transpose());
      ls.lin_cost = grads * (p.quad_cost * x + p.lin_cost);
      SubsolverOptions lopts;
      lopts.tol = 1e-12;
      lopts.classify_failure = false;
      SubsolverResult lr = solve_qp(ls, lopts);
      if (lr.status == SolveStatus::optimal && lr.x.allFinite()) {
        Eigen::VectorXd lq = Eigen::VectorXd::Zero(nq);
        Eigen::VectorXd lz = Eigen::VectorXd::Zero(m);
        Eigen::VectorXd ly = Eigen::VectorXd::Zero(np);
        row = 0;
        for (int i : aq) lq[i] = std::max(0.0, lr.x[row++]);
        for (int j : al) lz[j] = std::max(0.0, lr.x[row++]);
        for (int k = 0; k < np; ++k) ly[k] = lr.x[row++];
        if (dual_residual(lq, lz, ly) < dual_residual(r.quad_dual, r.in_dual, r.eq_dual)) {
          r.quad_dual = lq;
          r.in_dual = lz;
          r.eq_dual = ly;
        }
      }
    }
  }

  if (x.allFinite()) {
    double res = dual_residual(r.quad_dual, r.in_dual, r.eq_dual);
    if (np > 0) res = std::max(res, (p.cons.eq_a * x - p.cons.eq_b).cwiseAbs().maxCoeff());
    if (m > 0) res = std::max(res, std::max(0.0, (p.cons.in_a * x - p.cons.in_b).maxCoeff()));
    for (const QuadConstraint& qc : p.quads) res = std::max(res, std::max(0.0, qc.value(x)));
    r.kkt_residual = res;
    // The caller's data may sit far from unit scale; the acceptance threshold
    // follows the scaling factors so legitimately scaled-up residuals do not
    // demote an optimal result.
    double inflation = std::max(1.0, 1.0 / sc.cost);
    for (Eigen::Index i = 0; i < sc.quad_row.size(); ++i)
      inflation = std::max(inflation, 1.0 / sc.quad_row[i]);
    for (Eigen::Index i = 0; i < sc.in_row.size(); ++i)
      inflation = std::max(inflation, 1.0 / sc.in_row[i]);
    for (Eigen::Index i = 0; i < sc.eq_row.size(); ++i)
      inflation = std::max(inflation, 1.0 / sc.eq_row[i]);
    if (r.status == SolveStatus::optimal &&
        res > std::max(10.0 * opts.tol, 1e-7) * inflation)
      r.status = SolveStatus::max_iter;
  } else {
    r.kkt_residual = std::numeric_limits<double>::infinity();
  }
  return r;
}

}  // namespace hop
