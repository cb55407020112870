#pragma once

// Successive convex approximation drivers for the four-moment portfolio
// objective f(w) = -l1*phi1 + l2*phi2 - l3*phi3 + l4*phi4 over
// W = {1'w = 1, ||w||_1 <= L}:
//
//  * solve_mvsk_dc  — difference-of-convex linearization: each iteration
//    minimizes the proximal surrogate (tau_dc/2)||w - w_k||^2 + <grad f, w>
//    with unit steps; tau_dc dominates the full Hessian, so the objective
//    never increases.
//  * solve_mvsk_mm  — majorization-minimization: keeps the exact convex
//    part -l1*mu'w + l2*w'Sigma*w and majorizes only the odd-moment part
//    with tau_mm; unit steps, monotone.
//  * solve_mvsk_q   — quadratic surrogate: adds the PSD-projected Hessian
//    of the nonconvex part, then moves with the diminishing step schedule
//    gamma^0 = 1, gamma^k = gamma^{k-1} (1 - decay * gamma^{k-1}).
//
// Convergence is declared only when the relative stopping rule holds AND
// the projected-gradient stationarity residual ||w - Proj_W(w - grad f)||_inf
// is at or below opts.stat_tol; the projection is computed by an
// independent quadratic subproblem, so a stalled run cannot claim
// convergence merely because it stopped moving.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hop/bounds.hpp"
#include "hop/constraints.hpp"
#include "hop/moments.hpp"
#include "hop/qp.hpp"
#include "hop/types.hpp"

namespace hop {

/// Diminishing step sequence gamma^k = gamma^{k-1} (1 - decay*gamma^{k-1}):
/// strictly decreasing, gamma^k -> 0, sum gamma^k = inf.
struct StepSchedule {
  double gamma0 = 1.0;
  double decay = 1e-2;
  double value = 1.0;  // gamma for the upcoming iteration

  void reset() { value = gamma0; }
  /// Returns the step for this iteration and advances the sequence.
  double advance() {
    const double g = value;
    value = g * (1.0 - decay * g);
    return g;
  }
};

/// gamma^k of the default schedule (gamma^0 = 1, decay 1e-2).
inline double step_size(int k) {
  StepSchedule s;
  double g = s.gamma0;
  for (int i = 0; i < k; ++i) g = g * (1.0 - s.decay * g);
  return g;
}

/// Relative stopping rule: iterates close elementwise OR objectives close.
inline bool stop_check(const Eigen::VectorXd& x_prev, const Eigen::VectorXd& x_next,
                       double f_prev, double f_next, double tol = 1e-6) {
  bool iterates_close = x_prev.size() == x_next.size();
  for (Eigen::Index i = 0; iterates_close && i < x_prev.size(); ++i)
    iterates_close = std::abs(x_next[i] - x_prev[i]) <=
                     tol * (std::abs(x_next[i]) + std::abs(x_prev[i]));
  if (iterates_close) return true;
  return std::abs(f_next - f_prev) <= tol * (std::abs(f_next) + std::abs(f_prev));
}

enum class Termination { converged, max_iter };

inline const char* to_string(Termination t) {
  return t == Termination::converged ? "converged" : "max_iter";
}

struct IterationRecord {
  int k = 0;
  double objective = 0.0;      // f for the four-moment problem, delta for tilting
  double gamma = 0.0;          // step used to produce this iterate (0 at k = 0)
  double eta = 0.0;            // constraint relaxation level (tilting only)
  double max_violation = 0.0;  // against the true constraints
  double stationarity = 0.0;   // first-order residual at this iterate
  double wall_ms = 0.0;        // time spent producing this iterate
};

struct SolveReport {
  Eigen::VectorXd w;
  double delta = 0.0;  // tilting improvement; 0 for the four-moment problem
  double objective = 0.0;
  Termination termination = Termination::max_iter;
  int iterations = 0;
  int subsolver_calls = 0;  // convex subproblems solved (diagnostics excluded)
  double stationarity = std::numeric_limits<double>::infinity();
  double feasibility = 0.0;  // final max violation of the true constraints
  std::vector<IterationRecord> trace;
};

struct ScaOptions {
  int max_iter = 0;      // 0: per-algorithm default (1000 four-moment, 500 tilting)
  double rel_tol = 1e-6;  // relative iterate/objective stopping tolerance
  double stat_tol = 1e-5;  // projected-gradient gate for four-moment convergence
  double kkt_tol = 1e-4;   // first-order gate for tilting convergence
  double feas_tol = 1e-6;  // true-constraint violation allowed at convergence
  Eigen::VectorXd w_start;  // optional; default: equal weights
  SubsolverOptions subsolver;
};

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

/// Euclidean projection of a point onto W, via an independent quadratic
/// subproblem over the lifted (or simplex) constraint system.
inline Eigen::VectorXd project_weights(const Eigen::VectorXd& target, const FeasibleSet& fs,
                                       const SubsolverOptions& sopts) {
  const int n = fs.assets;
  QpProblem p;
  p.cons = weight_system(n, fs.leverage);
  const int v = p.cons.vars;
  p.quad_cost = Eigen::MatrixXd::Zero(v, v);
  p.quad_cost.topLeftCorner(n, n).setIdentity();
  p.lin_cost = Eigen::VectorXd::Zero(v);
  p.lin_cost.head(n) = -target;
  SubsolverOptions o = sopts;
  o.x0.reset();
  const SubsolverResult r = solve_qp(p, o);
  return r.x.head(n);
}

/// ||w - Proj_W(w - g)||_inf: zero exactly at stationary points.
inline double projected_gradient_residual(const Eigen::VectorXd& w, const Eigen::VectorXd& g,
                                          const FeasibleSet& fs,
                                          const SubsolverOptions& sopts) {
  return (w - project_weights(w - g, fs, sopts)).cwiseAbs().maxCoeff();
}

/// Accepts optimal solves and near-misses with a usable residual; anything
/// else aborts the outer algorithm with iteration context.
inline void require_usable(const SubsolverResult& r, int k, const char* what) {
  if (r.status == SolveStatus::optimal) return;
  if (r.status == SolveStatus::max_iter && r.kkt_residual <= 1e-6) return;
  throw ResourceError(std::string(what) + " subproblem solver returned " + to_string(r.status) +
                      " at iteration " + std::to_string(k));
}

enum class MvskKind { dc, mm, quad };

inline SolveReport solve_mvsk_impl(MvskKind kind, const MomentSet& m, const MvskSpec& spec,
                                   const FeasibleSet& fs, const ScaOptions& opts) {
  validate_mvsk_spec(spec);
  validate_feasible_set(fs);
  const int n = m.size();
  if (fs.assets != n) throw DimensionError("feasible set and moment set disagree on asset count");

  const LinearConstraintSystem cons = weight_system(n, fs.leverage);
  const int vars = cons.vars;
  const int max_iter = opts.max_iter > 0 ? opts.max_iter : 1000;

  Eigen::VectorXd w;
  if (opts.w_start.size() > 0) {
    if (opts.w_start.size() != n) throw DimensionError("start weights have the wrong length");
    if (fs.violation(opts.w_start) > 1e-8)
      throw DataError("start weights are outside the feasible set");
    w = opts.w_start;
  } else {
    w = Eigen::VectorXd::Constant(n, 1.0 / n);
  }

  // Curvature constants are global over W: computed once.
  double tau = 0.0;
  if (kind == MvskKind::dc) tau = dc_tau(m, spec, fs.leverage);
  if (kind == MvskKind::mm) tau = mm_tau(m, spec, fs.leverage);
  const double tau_w =
      spec.lambda2 > 0.0 ? 0.0 : 1e-6 * m.covariance().trace() / static_cast<double>(n);

  SolveReport rep;
  StepSchedule schedule;
  auto t_start = std::chrono::steady_clock::now();

  MvskValue val = mvsk_objective(w, m, spec);
  double stat = projected_gradient_residual(w, val.grad, fs, opts.subsolver);
  rep.trace.push_back({0, val.f, 0.0, 0.0, fs.violation(w), stat, elapsed_ms(t_start)});

  Eigen::VectorXd warm = embed_weights(w, fs.leverage);
  int k = 0;
  while (k < max_iter) {
    ++k;
    auto t_iter = std::chrono::steady_clock::now();

    QpProblem sub;
    sub.cons = cons;
    sub.quad_cost = Eigen::MatrixXd::Zero(vars, vars);
    sub.lin_cost = Eigen::VectorXd::Zero(vars);
    if (kind == MvskKind::dc) {
      sub.quad_cost.topLeftCorner(n, n) = tau * Eigen::MatrixXd::Identity(n, n);
      sub.lin_cost.head(n) = val.grad - tau * w;
    } else if (kind == MvskKind::mm) {
      sub.quad_cost.topLeftCorner(n, n) =
          2.0 * spec.lambda2 * m.covariance() + tau * Eigen::MatrixXd::Identity(n, n);
      sub.lin_cost.head(n) = -spec.lambda1 * m.mean() + val.grad_ncvx - tau * w;
    } else {
      const MomentDerivatives md = moment_derivatives(w, m);
      const Eigen::MatrixXd h_ncvx =
          nearest_psd(-spec.lambda3 * md.hess3 + spec.lambda4 * md.hess4);
      sub.quad_cost.topLeftCorner(n, n) = 2.0 * spec.lambda2 * m.covariance() + h_ncvx +
                                          tau_w * Eigen::MatrixXd::Identity(n, n);
      sub.lin_cost.head(n) = -spec.lambda1 * m.mean() + val.grad_ncvx -
                             (h_ncvx + tau_w * Eigen::MatrixXd::Identity(n, n)) * w;
    }

    SubsolverOptions sopts = opts.subsolver;
    sopts.x0 = warm;
    const SubsolverResult sr = solve_qp(sub, sopts);
    ++rep.subsolver_calls;
    require_usable(sr, k, kind == MvskKind::dc   ? "difference-of-convex"
                          : kind == MvskKind::mm ? "majorization"
                                                 : "quadratic-surrogate");
    warm = sr.x;
    const Eigen::VectorXd w_hat = sr.x.head(n);

    double gamma = 1.0;
    Eigen::VectorXd w_next;
    if (kind == MvskKind::quad) {
      gamma = schedule.advance();
      w_next = w + gamma * (w_hat - w);
    } else {
      w_next = w_hat;
    }
    MvskValue val_next = mvsk_objective(w_next, m, spec);

    if (kind != MvskKind::quad && val_next.f > val.f) {
      // Unit-step surrogate minimizers can only fail to descend through
      // floating-point noise at the solution; freeze the iterate so the
      // trace stays nonincreasing and settle convergence by stationarity.
      rep.trace.push_back(
          {k, val.f, gamma, 0.0, fs.violation(w), stat, elapsed_ms(t_iter)});
      rep.termination = (stat <= opts.stat_tol && fs.violation(w) <= opts.feas_tol)
                            ? Termination::converged
                            : Termination::max_iter;
      break;
    }

    const double stat_next =
        projected_gradient_residual(w_next, val_next.grad, fs, opts.subsolver);
    rep.trace.push_back({k, val_next.f, gamma, 0.0, fs.violation(w_next), stat_next,
                         elapsed_ms(t_iter)});

    const bool close = stop_check(w, w_next, val.f, val_next.f, opts.rel_tol);
    const bool frozen = (w_next - w).cwiseAbs().maxCoeff() == 0.0;
    w = w_next;
    val = val_next;
    stat = stat_next;
    if (close && stat <= opts.stat_tol && fs.violation(w) <= opts.feas_tol) {
      rep.termination = Termination::converged;
      break;
    }
    if (frozen) break;  // exact fixed point that fails the gate: no progress possible
  }

  rep.w = w;
  rep.delta = 0.0;
  rep.objective = val.f;
  rep.iterations = k;
  rep.stationarity = stat;
  rep.feasibility = fs.violation(w);
  return rep;
}

}  // namespace detail

/// Algorithm based on difference-of-convex linearization (unit steps,
/// monotone objective).
inline SolveReport solve_mvsk_dc(const MomentSet& m, const MvskSpec& spec, const FeasibleSet& fs,
                                 const ScaOptions& opts = {}) {
  return detail::solve_mvsk_impl(detail::MvskKind::dc, m, spec, fs, opts);
}

/// Majorization-minimization with the exact convex part retained (unit
/// steps, monotone objective).
inline SolveReport solve_mvsk_mm(const MomentSet& m, const MvskSpec& spec, const FeasibleSet& fs,
                                 const ScaOptions& opts = {}) {
  return detail::solve_mvsk_impl(detail::MvskKind::mm, m, spec, fs, opts);
}

/// Quadratic surrogate with PSD-projected curvature and diminishing steps.
inline SolveReport solve_mvsk_q(const MomentSet& m, const MvskSpec& spec, const FeasibleSet& fs,
                                const ScaOptions& opts = {}) {
  return detail::solve_mvsk_impl(detail::MvskKind::quad, m, spec, fs, opts);
}

}  // namespace hop
