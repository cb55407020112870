#pragma once

// Moment-improvement ("tilting") solvers.  Starting from reference weights
// w0, these maximize a scalar improvement level delta subject to every
// moment improving by at least its weighted share:
//
//   maximize   delta
//   subject to g1 = phi1(w0) - phi1(w) + d1*delta <= 0   (mean up)
//              g2 = phi2(w) - phi2(w0) + d2*delta <= 0   (variance down)
//              g3 = phi3(w0) - phi3(w) + d3*delta <= 0   (third moment up)
//              g4 = phi4(w) - phi4(w0) + d4*delta <= 0   (fourth moment down)
//              g5 = (w - w0)'Sigma(w - w0) - kappa^2 <= 0 (tracking error)
//              w in W,  delta >= 0.
//
// g3 and g4 are nonconvex; each iteration replaces them with linearizations
// (solve_tilting_l) or PSD-projected quadratic models (solve_tilting_q),
// relaxed by a level eta chosen just large enough to keep the subproblem
// feasible (eta_linear / eta_quadratic mix the current violation with the
// best achievable one).  Iterates move with the diminishing step schedule,
// so the convex rows g1, g2, g5 and W stay satisfied exactly while the
// relaxed rows converge to feasibility.  Convergence additionally requires
// a small first-order residual of the TRUE problem (tilting_kkt_residual),
// computed from scratch with nonnegative multipliers fit on the near-active
// true constraints.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hop/bounds.hpp"
#include "hop/constraints.hpp"
#include "hop/moments.hpp"
#include "hop/qcqp.hpp"
#include "hop/qp.hpp"
#include "hop/sca.hpp"
#include "hop/types.hpp"

namespace hop {

struct TiltingSpec {
  Eigen::VectorXd w0;  // reference weights; must lie in the feasible set
  Eigen::Vector4d d = Eigen::Vector4d::Ones();  // per-moment improvement weights
  double kappa = 0.0;   // tracking-error radius around w0 (Sigma-norm)
  double theta = 0.5;   // mix between current and best-achievable violation
  double tau_w = 1e-5;  // proximal weight on w
  double tau_delta = 1e-5;  // proximal weight on delta
};

inline void validate_tilting_spec(const TiltingSpec& t, const FeasibleSet& fs) {
  validate_feasible_set(fs);
  if (t.w0.size() != fs.assets)
    throw DimensionError("reference weights have the wrong length");
  if (!t.w0.allFinite()) throw DataError("reference weights have non-finite entries");
  if (fs.violation(t.w0) > 1e-8)
    throw DataError("reference weights are outside the feasible set");
  if (!t.d.allFinite() || (t.d.array() < 0.0).any())
    throw DataError("improvement weights must be finite and nonnegative");
  if (!(t.d.maxCoeff() > 0.0))
    throw DataError("at least one improvement weight must be positive");
  if (!std::isfinite(t.kappa) || t.kappa < 0.0)
    throw DataError("tracking-error radius must be finite and nonnegative");
  if (!(t.theta > 0.0) || !(t.theta < 1.0))
    throw DataError("theta must lie strictly between 0 and 1");
  if (!std::isfinite(t.tau_w) || t.tau_w < 0.0 || !std::isfinite(t.tau_delta) ||
      t.tau_delta < 0.0)
    throw DataError("proximal weights must be finite and nonnegative");
}

/// Default improvement weights: the magnitude of each portfolio moment at
/// the reference weights, so one unit of delta asks for a 100% improvement.
inline Eigen::Vector4d tilt_directions(const Eigen::VectorXd& w0, const MomentSet& m) {
  const PortfolioMoments pm = portfolio_moments(w0, m);
  Eigen::Vector4d d;
  d << std::abs(pm.phi1), std::abs(pm.phi2), std::abs(pm.phi3), std::abs(pm.phi4);
  return d;
}

struct TiltState {
  Eigen::VectorXd w;
  double delta = 0.0;
};

/// g1..g5 at (w, delta); positive entries are violations.
inline Eigen::Matrix<double, 5, 1> tilt_constraints(const TiltState& s, const MomentSet& m,
                                                    const TiltingSpec& tilt) {
  const PortfolioMoments pm = portfolio_moments(s.w, m);
  const PortfolioMoments p0 = portfolio_moments(tilt.w0, m);
  const Eigen::VectorXd dw = s.w - tilt.w0;
  Eigen::Matrix<double, 5, 1> g;
  g[0] = p0.phi1 - pm.phi1 + tilt.d[0] * s.delta;
  g[1] = pm.phi2 - p0.phi2 + tilt.d[1] * s.delta;
  g[2] = p0.phi3 - pm.phi3 + tilt.d[2] * s.delta;
  g[3] = pm.phi4 - p0.phi4 + tilt.d[3] * s.delta;
  g[4] = dw.dot(m.covariance() * dw) - tilt.kappa * tilt.kappa;
  return g;
}

/// Max violation of the true problem: g rows, W membership, delta >= 0.
inline double tilt_violation(const TiltState& s, const MomentSet& m, const TiltingSpec& tilt,
                             const FeasibleSet& fs) {
  const Eigen::Matrix<double, 5, 1> g = tilt_constraints(s, m, tilt);
  double v = std::max(fs.violation(s.w), std::max(0.0, -s.delta));
  v = std::max(v, g.maxCoeff());
  return std::max(v, 0.0);
}

namespace detail {

/// Shared per-solve context: lifted layout x = (w, [u,] delta) with wv
/// weight-block variables and delta at index wv.
struct TiltWork {
  const MomentSet* m = nullptr;
  TiltingSpec tilt;
  FeasibleSet fs;
  int n = 0;
  int wv = 0;
  int nx = 0;
  PortfolioMoments pm0;

  TiltWork(const MomentSet& mom, const TiltingSpec& t, const FeasibleSet& f)
      : m(&mom), tilt(t), fs(f), n(mom.size()), wv(weight_vars(n, f.leverage)), nx(wv + 1) {
    if (mom.size() != f.assets)
      throw DimensionError("feasible set and moment set disagree on asset count");
    validate_tilting_spec(t, f);
    pm0 = portfolio_moments(t.w0, mom);
  }

  /// w-space gradients of g1..g5 at w (rows of the returned matrix).
  Eigen::MatrixXd row_grads(const Eigen::VectorXd& w, const Eigen::VectorXd& grad3,
                            const Eigen::VectorXd& grad4) const {
    Eigen::MatrixXd gw(5, n);
    gw.row(0) = -m->mean().transpose();
    gw.row(1) = 2.0 * (m->covariance() * w).transpose();
    gw.row(2) = -grad3.transpose();
    gw.row(3) = grad4.transpose();
    gw.row(4) = 2.0 * (m->covariance() * (w - tilt.w0)).transpose();
    return gw;
  }

  /// delta-coefficients of g1..g5.
  Eigen::Matrix<double, 5, 1> delta_coeffs() const {
    Eigen::Matrix<double, 5, 1> c;
    c << tilt.d[0], tilt.d[1], tilt.d[2], tilt.d[3], 0.0;
    return c;
  }

  /// Linear rows common to every subproblem over (w, [u,] delta, ...):
  /// W-membership, delta >= 0, and the exact mean row g1 <= 0.
  ConstraintBuilder base_rows(int total_vars) const {
    ConstraintBuilder b(total_vars);
    b.embed(weight_system(n, fs.leverage), 0);
    Eigen::VectorXd row = Eigen::VectorXd::Zero(total_vars);
    row[wv] = -1.0;
    b.add_in(row, 0.0);  // -delta <= 0
    row.setZero();
    row.head(n) = -m->mean();
    row[wv] = tilt.d[0];
    b.add_in(row, -pm0.phi1);  // g1 exact
    return b;
  }

  Eigen::VectorXd embed_state(const TiltState& s, int total_vars) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(total_vars);
    x.head(wv) = embed_weights(s.w, fs.leverage);
    x[wv] = s.delta;
    return x;
  }
};

/// A subproblem outcome the surrounding iteration can act on: solved, or
/// stopped early with a near-solved KKT residual.
inline bool usable_tilt(const SubsolverResult& r) {
  if (r.status == SolveStatus::optimal) return true;
  return r.status == SolveStatus::max_iter && r.kkt_residual <= 1e-6;
}

/// Aborts on unusable subproblem outcomes, with iteration context.
inline void require_usable_tilt(const SubsolverResult& r, int k, const char* what) {
  if (usable_tilt(r)) return;
  throw ResourceError(std::string(what) + " returned " + to_string(r.status) +
                      " at iteration " + std::to_string(k) +
                      "; the relaxation level should keep it feasible");
}

}  // namespace detail

/// First-order residual of the true tilting problem at (w, delta): the
/// objective gradient of "minimize -delta" is fit with nonnegative
/// multipliers on the near-active true constraints (free multipliers on
/// equalities) by nonnegative least squares; the result is the max of the
/// stationarity gap, the primal violation, and the complementarity slack.
inline double tilting_kkt_residual(const TiltState& s, const MomentSet& m,
                                   const TiltingSpec& tilt, const FeasibleSet& fs,
                                   const SubsolverOptions& sopts = {}) {
  const detail::TiltWork wk(m, tilt, fs);
  const int nx = wk.nx;
  const Eigen::VectorXd grad3 = grad_phi3(s.w, m);
  const Eigen::VectorXd grad4 = grad_phi4(s.w, m);
  const Eigen::MatrixXd gw = wk.row_grads(s.w, grad3, grad4);
  const Eigen::Matrix<double, 5, 1> dc = wk.delta_coeffs();
  const Eigen::Matrix<double, 5, 1> g = tilt_constraints(s, m, tilt);

  Eigen::VectorXd g0 = Eigen::VectorXd::Zero(nx);
  g0[wk.wv] = -1.0;  // objective: minimize -delta

  const LinearConstraintSystem wsys = weight_system(wk.n, fs.leverage);
  const Eigen::VectorXd xw = embed_weights(s.w, fs.leverage);

  std::vector<Eigen::VectorXd> ineq_rows;  // gradients of near-active inequalities
  std::vector<double> ineq_slack;          // their (signed) constraint values
  auto consider = [&](const Eigen::VectorXd& grad, double value, double scale) {
    // A vanishing gradient carries no stationarity information (it happens
    // at the ball center, where the tracking-error row is degenerate), and
    // normalizing it would blow up; the row's violation is still accounted
    // for through tilt_violation below.
    if (grad.cwiseAbs().maxCoeff() <= 1e-300) return;
    if (value >= -1e-6 * (1.0 + std::abs(scale))) {
      ineq_rows.push_back(grad);
      ineq_slack.push_back(value);
    }
  };

  for (int r = 0; r < wsys.in_rows(); ++r) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(nx);
    row.head(wk.wv) = wsys.in_a.row(r);
    consider(row, wsys.in_a.row(r).dot(xw) - wsys.in_b[r], wsys.in_b[r]);
  }
  {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(nx);
    row[wk.wv] = -1.0;
    consider(row, -s.delta, 1.0);  // delta >= 0
  }
  const double scales[5] = {wk.pm0.phi1, wk.pm0.phi2, wk.pm0.phi3, wk.pm0.phi4,
                            tilt.kappa * tilt.kappa};
  for (int j = 0; j < 5; ++j) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(nx);
    row.head(wk.n) = gw.row(j);
    row[wk.wv] = dc[j];
    consider(row, g[j], scales[j]);
  }

  const int na = static_cast<int>(ineq_rows.size());
  const int ne = wsys.eq_rows();
  const double violation = tilt_violation(s, m, tilt, fs);
  if (na + ne == 0) return std::max(g0.cwiseAbs().maxCoeff(), violation);

  // Fit multipliers against unit-norm gradient rows.  The moment rows carry
  // gradients as small as the fourth-moment scale, so their true multipliers
  // reach 1/d_j; fitting them raw would let the regularization swallow
  // exactly the rows that matter.  The normalized multiplier lambda~ equals
  // lambda * row_norm, which keeps the fit variables O(1).
  Eigen::MatrixXd jac(na + ne, nx);
  Eigen::VectorXd row_norm(na + ne);
  for (int i = 0; i < na; ++i) {
    const Eigen::VectorXd& row = ineq_rows[static_cast<std::size_t>(i)];
    const double nrm = std::max(row.cwiseAbs().maxCoeff(), 1e-300);
    jac.row(i) = row / nrm;
    row_norm[i] = nrm;
  }
  for (int r = 0; r < ne; ++r) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(nx);
    row.head(wk.wv) = wsys.eq_a.row(r);
    const double nrm = std::max(row.cwiseAbs().maxCoeff(), 1e-300);
    jac.row(na + r) = row / nrm;
    row_norm[na + r] = nrm;
  }

  QpProblem fit;
  fit.quad_cost = jac * jac.transpose();
  fit.quad_cost = 0.5 * (fit.quad_cost + fit.quad_cost.transpose()).eval();
  // Penalize each multiplier by its row's normalized slack so the fit
  // minimizes stationarity AND complementarity together instead of buying
  // stationarity with multipliers on rows that are not actually tight.
  for (int i = 0; i < na; ++i) {
    const double sl = ineq_slack[static_cast<std::size_t>(i)] / row_norm[i];
    fit.quad_cost(i, i) += sl * sl;
  }
  fit.quad_cost.diagonal().array() += 1e-12 * (1.0 + fit.quad_cost.cwiseAbs().maxCoeff());
  fit.lin_cost = jac * g0;
  fit.cons.vars = na + ne;
  fit.cons.eq_a.resize(0, na + ne);
  fit.cons.eq_b.resize(0);
  fit.cons.in_a = Eigen::MatrixXd::Zero(na, na + ne);
  fit.cons.in_a.leftCols(na) = -Eigen::MatrixXd::Identity(na, na);
  fit.cons.in_b = Eigen::VectorXd::Zero(na);
  SubsolverOptions fo = sopts;
  fo.tol = 1e-12;
  fo.max_iter = 200;
  fo.x0.reset();
  const SubsolverResult fr = solve_qp(fit, fo);

  const Eigen::VectorXd stat = g0 + jac.transpose() * fr.x;
  double res = stat.cwiseAbs().maxCoeff();
  for (int i = 0; i < na; ++i)  // lambda_i * slack_i with lambda_i = x_i / row_norm_i
    res = std::max(res, std::abs(fr.x[i] * ineq_slack[static_cast<std::size_t>(i)] / row_norm[i]));
  return std::max(res, violation);
}

/// Relaxation level for the linearized subproblem: (1 - theta) times the
/// current violation of the relaxed rows (g2..g5) plus theta times the
/// smallest violation the linearized rows admit over the feasible base set
/// (a linear program in (w, [u,] delta, t)).
inline double eta_linear(const TiltState& s, const MomentSet& m, const TiltingSpec& tilt,
                         const FeasibleSet& fs, const SubsolverOptions& sopts = {}) {
  const detail::TiltWork wk(m, tilt, fs);
  const Eigen::Matrix<double, 5, 1> g = tilt_constraints(s, m, tilt);
  double worst = 0.0;
  for (int j = 1; j < 5; ++j) worst = std::max(worst, g[j]);
  if (worst <= 0.0) return 0.0;  // expansion point already satisfies the rows

  const Eigen::VectorXd grad3 = grad_phi3(s.w, m);
  const Eigen::VectorXd grad4 = grad_phi4(s.w, m);
  const Eigen::MatrixXd gw = wk.row_grads(s.w, grad3, grad4);
  const Eigen::Matrix<double, 5, 1> dc = wk.delta_coeffs();

  // The bound variable is substituted as t = sigma * t' with sigma the common
  // magnitude of the model rows; otherwise the t-column towers over moment
  // gradients near 1e-4 and the solve loses exactly the digits eta is made
  // of. A single shared factor keeps the minimized maximum unchanged.
  double sigma_t = 1e-12;
  for (int j = 1; j < 5; ++j)
    sigma_t = std::max({sigma_t, gw.row(j).cwiseAbs().maxCoeff(), std::abs(dc[j])});

  const int nx = wk.nx + 1;  // (w, [u,] delta, t')
  const int ti = wk.nx;
  ConstraintBuilder b = wk.base_rows(nx);
  {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(nx);
    row[ti] = -1.0;
    b.add_in(row, 0.0);  // t' >= 0
  }
  for (int j = 1; j < 5; ++j) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(nx);
    row.head(wk.n) = gw.row(j) / sigma_t;
    row[wk.wv] = dc[j] / sigma_t;
    row[ti] = -1.0;
    b.add_in(row, (gw.row(j).dot(s.w) + dc[j] * s.delta - g[j]) / sigma_t);
  }

  Eigen::VectorXd cost = Eigen::VectorXd::Zero(nx);
  cost[ti] = 1.0;
  SubsolverOptions o = sopts;
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(nx);
  x0.head(wk.nx) = wk.embed_state(s, wk.nx);
  x0[ti] = worst / sigma_t;
  o.x0 = x0;
  const SubsolverResult r = solve_lp(cost, b.build(), o);
  detail::require_usable_tilt(r, 0, "the feasibility-restoration linear program");
  const double best = std::max(0.0, sigma_t * r.x[ti]);
  return (1.0 - tilt.theta) * worst + tilt.theta * best;
}

/// Relaxation level for the quadratic subproblem: same mix as eta_linear,
/// but only g3 and g4 are relaxed (g2 and g5 stay exact convex rows) and
/// the restoration problem is a QCQP in (w, [u,] delta, t).
inline double eta_quadratic(const TiltState& s, const MomentSet& m, const TiltingSpec& tilt,
                            const FeasibleSet& fs, const SubsolverOptions& sopts = {}) {
  const detail::TiltWork wk(m, tilt, fs);
  const Eigen::Matrix<double, 5, 1> g = tilt_constraints(s, m, tilt);
  const double worst = std::max({0.0, g[2], g[3]});
  if (worst <= 0.0) return 0.0;

  const MomentDerivatives md = moment_derivatives(s.w, m);
  const Eigen::MatrixXd h_phi = nearest_psd(-md.hess3);
  const Eigen::MatrixXd h_psi = nearest_psd(md.hess4);
  const Eigen::MatrixXd gw = wk.row_grads(s.w, md.grad3, md.grad4);
  const Eigen::Matrix<double, 5, 1> dc = wk.delta_coeffs();

  const int nx = wk.nx + 1;
  const int ti = wk.nx;
  QcqpProblem p;
  ConstraintBuilder b = wk.base_rows(nx);
  {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(nx);
    row[ti] = -1.0;
    b.add_in(row, 0.0);  // t' >= 0
  }
  p.cons = b.build();
  p.quad_cost = Eigen::MatrixXd::Zero(nx, nx);
  p.lin_cost = Eigen::VectorXd::Zero(nx);
  p.lin_cost[ti] = 1.0;

  const Eigen::MatrixXd& sigma = m.covariance();
  {
    QuadConstraint qc;  // g2 exact: phi2(w) - phi2(w0) + d2*delta <= 0
    qc.q_mat = Eigen::MatrixXd::Zero(nx, nx);
    qc.q_mat.topLeftCorner(wk.n, wk.n) = 2.0 * sigma;
    qc.q_vec = Eigen::VectorXd::Zero(nx);
    qc.q_vec[wk.wv] = dc[1];
    qc.offset = -wk.pm0.phi2;
    p.quads.push_back(qc);
  }
  {
    QuadConstraint qc;  // g5 exact: (w - w0)'Sigma(w - w0) <= kappa^2
    qc.q_mat = Eigen::MatrixXd::Zero(nx, nx);
    qc.q_mat.topLeftCorner(wk.n, wk.n) = 2.0 * sigma;
    qc.q_vec = Eigen::VectorXd::Zero(nx);
    qc.q_vec.head(wk.n) = -2.0 * (sigma * tilt.w0);
    qc.offset = tilt.w0.dot(sigma * tilt.w0) - tilt.kappa * tilt.kappa;
    p.quads.push_back(qc);
  }
  // As in eta_linear, the bound variable is substituted as t = sigma * t' so
  // the relaxed rows carry coefficients of one common magnitude; the exact
  // rows above do not involve t and stay as they are.
  const Eigen::MatrixXd* models[2] = {&h_phi, &h_psi};
  const int rows[2] = {2, 3};
  double sigma_t = 1e-12;
  for (int r = 0; r < 2; ++r) {
    const int j = rows[r];
    const Eigen::MatrixXd& h = *models[r];
    const Eigen::VectorXd lin = gw.row(j).transpose() - h * s.w;
    const double off =
        g[j] - gw.row(j).dot(s.w) - dc[j] * s.delta + 0.5 * s.w.dot(h * s.w);
    sigma_t = std::max({sigma_t, h.cwiseAbs().maxCoeff(), lin.cwiseAbs().maxCoeff(),
                        std::abs(dc[j]), std::abs(off)});
  }
  for (int r = 0; r < 2; ++r) {
    const int j = rows[r];
    const Eigen::MatrixXd& h = *models[r];
    QuadConstraint qc;  // convexified g_j minus sigma * t' <= 0, all over sigma
    qc.q_mat = Eigen::MatrixXd::Zero(nx, nx);
    qc.q_mat.topLeftCorner(wk.n, wk.n) = h / sigma_t;
    qc.q_vec = Eigen::VectorXd::Zero(nx);
    qc.q_vec.head(wk.n) = (gw.row(j).transpose() - h * s.w) / sigma_t;
    qc.q_vec[wk.wv] = dc[j] / sigma_t;
    qc.q_vec[ti] = -1.0;
    qc.offset =
        (g[j] - gw.row(j).dot(s.w) - dc[j] * s.delta + 0.5 * s.w.dot(h * s.w)) / sigma_t;
    p.quads.push_back(qc);
  }

  SubsolverOptions o = sopts;
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(nx);
  x0.head(wk.nx) = wk.embed_state(s, wk.nx);
  x0[ti] = 2.0 * worst / sigma_t + 1.0;
  o.x0 = x0;
  const SubsolverResult r = solve_qcqp(p, o);
  detail::require_usable_tilt(r, 0, "the feasibility-restoration program");
  const double best = std::max(0.0, sigma_t * r.x[ti]);
  return (1.0 - tilt.theta) * worst + tilt.theta * best;
}

namespace detail {

/// Closed-form retraction of an iterate onto the true feasible set.  The
/// averaged iterates approach feasibility only at the rate of the step
/// schedule, so the raw trajectory can hover a little outside the moment
/// rows long after the weights have stopped moving.  Two exact repairs fix
/// that without another solve: shrink w toward w0 along the segment between
/// them until the tracking-error ball holds (the segment stays inside the
/// weight polytope because both endpoints are in it), then recompute delta
/// as the largest relaxation level the retracted weights actually support.
/// Rows whose improvement weight is zero cannot be repaired by delta and
/// keep whatever sign they have.
inline TiltState pull_back(const TiltState& s, const TiltWork& wk) {
  TiltState out = s;
  if (wk.tilt.kappa >= 0.0) {
    const Eigen::MatrixXd& sigma = wk.m->covariance();
    const Eigen::VectorXd dw = s.w - wk.tilt.w0;
    const double te2 = dw.dot(sigma * dw);
    const double k2 = wk.tilt.kappa * wk.tilt.kappa;
    if (te2 > k2 && te2 > 0.0) out.w = wk.tilt.w0 + std::sqrt(k2 / te2) * dw;
  }
  const PortfolioMoments pm = portfolio_moments(out.w, *wk.m);
  const double gain[4] = {pm.phi1 - wk.pm0.phi1, wk.pm0.phi2 - pm.phi2,
                          pm.phi3 - wk.pm0.phi3, wk.pm0.phi4 - pm.phi4};
  double cap = std::numeric_limits<double>::infinity();
  for (int j = 0; j < 4; ++j)
    if (wk.tilt.d[j] > 0.0) cap = std::min(cap, gain[j] / wk.tilt.d[j]);
  out.delta = std::isfinite(cap) ? std::max(0.0, cap) : 0.0;
  return out;
}

enum class TiltKind { linear, quad };

inline SolveReport solve_tilting_impl(TiltKind kind, const MomentSet& m, const TiltingSpec& tilt,
                                      const FeasibleSet& fs, const ScaOptions& opts) {
  const TiltWork wk(m, tilt, fs);
  const int n = wk.n;
  const int nx = wk.nx;
  const int max_iter = opts.max_iter > 0 ? opts.max_iter : 500;

  SolveReport rep;
  auto t_start = std::chrono::steady_clock::now();

  TiltState s{tilt.w0, 0.0};
  if (tilt.kappa == 0.0) {
    // The tracking-error ball is the single point w0, so the feasible set
    // collapses to (w0, 0) and that point is the global optimum in closed
    // form.  Its constraint gradients are degenerate (the tracking-error
    // row has a vanishing gradient), so first-order conditions need not
    // hold there; stationarity records the measured gap regardless.
    rep.w = tilt.w0;
    rep.delta = 0.0;
    rep.objective = 0.0;
    rep.termination = Termination::converged;
    rep.iterations = 0;
    rep.stationarity = tilting_kkt_residual(s, m, tilt, fs, opts.subsolver);
    rep.feasibility = tilt_violation(s, m, tilt, fs);
    rep.trace.push_back(
        {0, 0.0, 0.0, 0.0, rep.feasibility, rep.stationarity, elapsed_ms(t_start)});
    return rep;
  }

  double kkt = tilting_kkt_residual(s, m, tilt, fs, opts.subsolver);
  rep.trace.push_back(
      {0, s.delta, 0.0, 0.0, tilt_violation(s, m, tilt, fs), kkt, elapsed_ms(t_start)});

  StepSchedule schedule;
  Eigen::VectorXd warm = wk.embed_state(s, nx);
  const char* sub_name = kind == TiltKind::linear ? "the linearized improvement subproblem"
                                                  : "the quadratic improvement subproblem";
  // The raw averaged iterates drive the algorithm; what is measured,
  // traced and finally reported is their pull_back onto the true
  // constraints, which converges to the same point but is feasible at
  // every iteration instead of only in the limit.
  TiltState shown = pull_back(s, wk);
  int k = 0;
  while (k < max_iter) {
    ++k;
    auto t_iter = std::chrono::steady_clock::now();

    const Eigen::Matrix<double, 5, 1> g = tilt_constraints(s, m, tilt);
    const Eigen::Matrix<double, 5, 1> dc = wk.delta_coeffs();
    double worst = 0.0;
    if (kind == TiltKind::linear)
      for (int j = 1; j < 5; ++j) worst = std::max(worst, g[j]);
    else
      worst = std::max(g[2], g[3]);
    double eta = 0.0;
    if (worst > 0.0) {
      eta = kind == TiltKind::linear ? eta_linear(s, m, tilt, fs, opts.subsolver)
                                     : eta_quadratic(s, m, tilt, fs, opts.subsolver);
      ++rep.subsolver_calls;  // the restoration solve inside eta_*
    }

    // Proximal objective: -delta + (tau_delta/2)(delta - delta_k)^2
    //                     + (tau_w/2)||w - w_k||^2, constants dropped.
    Eigen::MatrixXd q_cost = Eigen::MatrixXd::Zero(nx, nx);
    q_cost.topLeftCorner(n, n) = tilt.tau_w * Eigen::MatrixXd::Identity(n, n);
    q_cost(wk.wv, wk.wv) = tilt.tau_delta;
    Eigen::VectorXd l_cost = Eigen::VectorXd::Zero(nx);
    l_cost.head(n) = -tilt.tau_w * s.w;
    l_cost[wk.wv] = -1.0 - tilt.tau_delta * s.delta;

    SubsolverResult sr;
    if (kind == TiltKind::linear) {
      const Eigen::VectorXd grad3 = grad_phi3(s.w, m);
      const Eigen::VectorXd grad4 = grad_phi4(s.w, m);
      const Eigen::MatrixXd gw = wk.row_grads(s.w, grad3, grad4);
      ConstraintBuilder b = wk.base_rows(nx);
      for (int j = 1; j < 5; ++j) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nx);
        row.head(n) = gw.row(j);
        row[wk.wv] = dc[j];
        b.add_in(row, gw.row(j).dot(s.w) + dc[j] * s.delta - g[j] + eta);
      }
      QpProblem p;
      p.quad_cost = q_cost;
      p.lin_cost = l_cost;
      p.cons = b.build();
      SubsolverOptions o = opts.subsolver;
      o.x0 = warm;
      sr = solve_qp(p, o);
    } else {
      const MomentDerivatives md = moment_derivatives(s.w, m);
      const Eigen::MatrixXd h_phi = nearest_psd(-md.hess3);
      const Eigen::MatrixXd h_psi = nearest_psd(md.hess4);
      const Eigen::MatrixXd gw = wk.row_grads(s.w, md.grad3, md.grad4);
      QcqpProblem p;
      p.cons = wk.base_rows(nx).build();
      p.quad_cost = q_cost;
      p.lin_cost = l_cost;
      const Eigen::MatrixXd& sigma = m.covariance();
      {
        QuadConstraint qc;  // g2 exact
        qc.q_mat = Eigen::MatrixXd::Zero(nx, nx);
        qc.q_mat.topLeftCorner(n, n) = 2.0 * sigma;
        qc.q_vec = Eigen::VectorXd::Zero(nx);
        qc.q_vec[wk.wv] = dc[1];
        qc.offset = -wk.pm0.phi2;
        p.quads.push_back(qc);
      }
      {
        QuadConstraint qc;  // g5 exact
        qc.q_mat = Eigen::MatrixXd::Zero(nx, nx);
        qc.q_mat.topLeftCorner(n, n) = 2.0 * sigma;
        qc.q_vec = Eigen::VectorXd::Zero(nx);
        qc.q_vec.head(n) = -2.0 * (sigma * tilt.w0);
        qc.offset = tilt.w0.dot(sigma * tilt.w0) - tilt.kappa * tilt.kappa;
        p.quads.push_back(qc);
      }
      const Eigen::MatrixXd* models[2] = {&h_phi, &h_psi};
      const int rows[2] = {2, 3};
      for (int r = 0; r < 2; ++r) {
        const int j = rows[r];
        const Eigen::MatrixXd& h = *models[r];
        QuadConstraint qc;  // convexified g_j <= eta
        qc.q_mat = Eigen::MatrixXd::Zero(nx, nx);
        qc.q_mat.topLeftCorner(n, n) = h;
        qc.q_vec = Eigen::VectorXd::Zero(nx);
        qc.q_vec.head(n) = gw.row(j).transpose() - h * s.w;
        qc.q_vec[wk.wv] = dc[j];
        qc.offset = g[j] - gw.row(j).dot(s.w) - dc[j] * s.delta + 0.5 * s.w.dot(h * s.w) - eta;
        p.quads.push_back(qc);
      }
      // The four curved rows live on moment scales spanning several orders
      // of magnitude, so their multipliers span them in reverse, and an
      // absolute KKT tolerance becomes unreachable.  Dividing each row by
      // its own magnitude changes nothing about the feasible set but keeps
      // the duals O(1).
      for (QuadConstraint& qc : p.quads) {
        const double mag =
            std::max({qc.q_mat.cwiseAbs().maxCoeff(), qc.q_vec.cwiseAbs().maxCoeff(),
                      std::abs(qc.offset), 1e-12});
        qc.q_mat /= mag;
        qc.q_vec /= mag;
        qc.offset /= mag;
      }
      SubsolverOptions o = opts.subsolver;
      o.x0 = warm;
      sr = solve_qcqp(p, o);
      if (!detail::usable_tilt(sr)) {
        // A warm start sitting exactly on several curved boundaries can
        // poison the interior-point iteration; the neutral start is slower
        // but does not inherit that geometry.
        o.x0.reset();
        o.max_iter *= 3;
        sr = solve_qcqp(p, o);
      }
    }
    ++rep.subsolver_calls;
    require_usable_tilt(sr, k, sub_name);
    warm = sr.x;

    const double gamma = schedule.advance();
    const Eigen::VectorXd w_hat = sr.x.head(n);
    const double delta_hat = sr.x[wk.wv];
    TiltState next;
    next.w = s.w + gamma * (w_hat - s.w);
    next.delta = std::max(0.0, s.delta + gamma * (delta_hat - s.delta));

    shown = pull_back(next, wk);
    const double viol = tilt_violation(shown, m, tilt, fs);
    const double kkt_next = tilting_kkt_residual(shown, m, tilt, fs, opts.subsolver);
    rep.trace.push_back({k, shown.delta, gamma, eta, viol, kkt_next, elapsed_ms(t_iter)});

    Eigen::VectorXd x_prev(n + 1), x_next(n + 1);
    x_prev << s.w, s.delta;
    x_next << next.w, next.delta;
    const bool close = stop_check(x_prev, x_next, s.delta, next.delta, opts.rel_tol);
    s = next;
    kkt = kkt_next;
    if (close && kkt <= opts.kkt_tol && viol <= opts.feas_tol) {
      rep.termination = Termination::converged;
      break;
    }
  }

  rep.w = shown.w;
  rep.delta = shown.delta;
  rep.objective = shown.delta;
  rep.iterations = k;
  rep.stationarity = kkt;
  rep.feasibility = tilt_violation(shown, m, tilt, fs);
  return rep;
}

}  // namespace detail

/// Tilting with linearized moment rows: each iteration solves a quadratic
/// program whose g2..g5 rows are first-order models relaxed by eta_linear.
inline SolveReport solve_tilting_l(const MomentSet& m, const TiltingSpec& tilt,
                                   const FeasibleSet& fs, const ScaOptions& opts = {}) {
  return detail::solve_tilting_impl(detail::TiltKind::linear, m, tilt, fs, opts);
}

/// Tilting with quadratic moment rows: g2 and g5 stay exact, g3 and g4 are
/// PSD-projected quadratic models relaxed by eta_quadratic; each iteration
/// solves a quadratically constrained program.
inline SolveReport solve_tilting_q(const MomentSet& m, const TiltingSpec& tilt,
                                   const FeasibleSet& fs, const ScaOptions& opts = {}) {
  return detail::solve_tilting_impl(detail::TiltKind::quad, m, tilt, fs, opts);
}

}  // namespace hop
