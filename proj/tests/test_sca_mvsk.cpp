#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "hop/bounds.hpp"
#include "hop/constraints.hpp"
#include "hop/moments.hpp"
#include "hop/qp.hpp"
#include "hop/sca.hpp"
#include "hop/types.hpp"
#include "support.hpp"

using hop::FeasibleSet;
using hop::MomentSet;
using hop::MvskSpec;
using hop::ScaOptions;
using hop::SolveReport;
using hop::Termination;

namespace {

MomentSet panel_moments(std::uint64_t seed, int n, int t) {
  return MomentSet::estimate(test_support::make_panel(seed, n, t));
}

double objective_at(const Eigen::VectorXd& w, const MomentSet& m, const MvskSpec& spec) {
  const hop::PortfolioMoments pm = hop::portfolio_moments(w, m);
  return -spec.lambda1 * pm.phi1 + spec.lambda2 * pm.phi2 - spec.lambda3 * pm.phi3 +
         spec.lambda4 * pm.phi4;
}

/// Independent projected-gradient residual, assembled from scratch.
double reference_stationarity(const Eigen::VectorXd& w, const MomentSet& m, const MvskSpec& spec,
                              const FeasibleSet& fs) {
  const Eigen::VectorXd grad = hop::mvsk_objective(w, m, spec).grad;
  hop::QpProblem p;
  p.cons = hop::weight_system(fs.assets, fs.leverage);
  p.quad_cost = Eigen::MatrixXd::Zero(p.cons.vars, p.cons.vars);
  p.quad_cost.topLeftCorner(fs.assets, fs.assets).setIdentity();
  p.lin_cost = Eigen::VectorXd::Zero(p.cons.vars);
  p.lin_cost.head(fs.assets) = -(w - grad);
  const hop::SubsolverResult r = hop::solve_qp(p);
  return (w - r.x.head(fs.assets)).cwiseAbs().maxCoeff();
}

}  // namespace

// ---------------------------------------------------------------------------
// Step schedule and stopping rule

TEST_CASE("step schedule produces the documented leading values") {
  CHECK(hop::step_size(0) == 1.0);
  CHECK(hop::step_size(1) == Catch::Approx(0.99).margin(1e-15));
  CHECK(hop::step_size(2) == Catch::Approx(0.980199).margin(1e-12));

  hop::StepSchedule s;
  for (int k = 0; k < 10; ++k) {
    CHECK(s.value == Catch::Approx(hop::step_size(k)).margin(1e-15));
    s.advance();
  }
}

TEST_CASE("step sequence stays within the guaranteed envelope over a million steps") {
  hop::StepSchedule s;
  double prev = 2.0;
  double sum = 0.0;
  bool decreasing = true;
  double min_scaled = std::numeric_limits<double>::infinity();
  double max_scaled = 0.0;
  for (int k = 1; k <= 1000000; ++k) {
    const double g = s.advance();  // gamma^{k-1}
    decreasing = decreasing && g > 0.0 && g < prev;
    prev = g;
    sum += g;
    const double scaled = g * static_cast<double>(k);
    min_scaled = std::min(min_scaled, scaled);
    max_scaled = std::max(max_scaled, scaled);
  }
  REQUIRE(decreasing);
  REQUIRE(min_scaled > 0.9);   // k * gamma_k stays away from zero
  REQUIRE(max_scaled < 101.0);  // and away from infinity
  CHECK(sum > 100.0);           // while the series keeps diverging
}

TEST_CASE("relative stopping rule matches its definition") {
  Eigen::VectorXd a(2), b(2);
  a << 1.0, 1.0;

  b << 1.0, 1.0 + 1e-9;  // iterates close, objectives far apart
  CHECK(hop::stop_check(a, b, 0.0, 100.0));

  b << 1.0, 2.0;  // iterates far apart, objectives close
  CHECK(hop::stop_check(a, b, 1.0, 1.0 + 1e-10));

  CHECK_FALSE(hop::stop_check(a, b, 1.0, 2.0));  // neither close

  CHECK(hop::stop_check(a, a, 0.0, 0.0));  // exact fixed point, both zero
}

// ---------------------------------------------------------------------------
// Oracle: exhaustive grid search on two assets

TEST_CASE("two-asset grid search certifies all three algorithms") {
  const MomentSet m = panel_moments(11, 2, 60);
  const MvskSpec spec = hop::crra_lambdas(10.0);

  for (const double leverage : {1.0, 1.5}) {
    const FeasibleSet fs{2, leverage};
    // w = (a, 1-a); the leverage cap limits a to [-(L-1)/2, 1+(L-1)/2].
    const double lo = -(leverage - 1.0) / 2.0;
    const double hi = 1.0 - lo;
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd w(2);
    for (double a = lo; a <= hi + 1e-12; a += 1e-3) {
      w << a, 1.0 - a;
      best = std::min(best, objective_at(w, m, spec));
    }

    ScaOptions opts;
    opts.max_iter = 2000;
    for (auto* solve : {&hop::solve_mvsk_dc, &hop::solve_mvsk_mm, &hop::solve_mvsk_q}) {
      const SolveReport rep = (*solve)(m, spec, fs, opts);
      INFO("leverage " << leverage);
      CHECK(rep.objective <= best + 1e-3);
      CHECK(rep.objective >= best - 1e-3);
      CHECK(fs.violation(rep.w) <= 1e-8);
    }
  }
}

// ---------------------------------------------------------------------------
// Oracle: direct mean-variance solve when the odd-moment terms vanish

TEST_CASE("algorithms collapse to plain mean-variance when the high-order weights are zero") {
  const MomentSet m = panel_moments(23, 6, 90);
  MvskSpec spec;
  spec.lambda1 = 1.0;
  spec.lambda2 = 4.0;
  const FeasibleSet fs{6, 1.6};

  hop::QpProblem mv;
  mv.cons = hop::weight_system(6, fs.leverage);
  mv.quad_cost = Eigen::MatrixXd::Zero(mv.cons.vars, mv.cons.vars);
  mv.quad_cost.topLeftCorner(6, 6) = 2.0 * spec.lambda2 * m.covariance();
  mv.lin_cost = Eigen::VectorXd::Zero(mv.cons.vars);
  mv.lin_cost.head(6) = -spec.lambda1 * m.mean();
  hop::SubsolverOptions qo;
  qo.tol = 1e-12;
  const hop::SubsolverResult direct = hop::solve_qp(mv, qo);
  REQUIRE(direct.status == hop::SolveStatus::optimal);
  const double f_direct = objective_at(direct.x.head(6), m, spec);

  ScaOptions opts;
  opts.max_iter = 4000;
  opts.rel_tol = 1e-12;
  opts.stat_tol = 1e-8;
  opts.subsolver.tol = 1e-11;

  const SolveReport mm = hop::solve_mvsk_mm(m, spec, fs, opts);
  CHECK(std::abs(mm.objective - f_direct) <= 1e-8);

  const SolveReport q = hop::solve_mvsk_q(m, spec, fs, opts);
  CHECK(std::abs(q.objective - f_direct) <= 1e-8);

  const SolveReport dc = hop::solve_mvsk_dc(m, spec, fs, opts);
  CHECK(std::abs(dc.objective - f_direct) <= 1e-7);

  // With no odd-moment terms the majorization surrogate IS the objective,
  // so the first subproblem already lands on the optimum.
  CHECK(mm.iterations <= 3);
}

// ---------------------------------------------------------------------------
// Oracle: finite differences of the surrogates at the expansion point

TEST_CASE("every surrogate touches the objective gradient at its expansion point") {
  const MomentSet m = panel_moments(31, 7, 80);
  const MvskSpec spec = hop::crra_lambdas(8.0);
  const double leverage = 1.8;
  const double tau_dc = hop::dc_tau(m, spec, leverage);
  const double tau_mm = hop::mm_tau(m, spec, leverage);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    const Eigen::VectorXd wk = test_support::sample_feasible(rng, 7, leverage);
    const hop::MvskValue at = hop::mvsk_objective(wk, m, spec);
    const hop::MomentDerivatives md = hop::moment_derivatives(wk, m);
    const Eigen::MatrixXd h_ncvx =
        hop::nearest_psd(-spec.lambda3 * md.hess3 + spec.lambda4 * md.hess4);

    const auto f_cvx = [&](const Eigen::VectorXd& w) {
      return -spec.lambda1 * w.dot(m.mean()) + spec.lambda2 * w.dot(m.covariance() * w);
    };
    const auto dc_model = [&](const Eigen::VectorXd& w) {
      return at.f + at.grad.dot(w - wk) + 0.5 * tau_dc * (w - wk).squaredNorm();
    };
    const auto mm_model = [&](const Eigen::VectorXd& w) {
      return f_cvx(w) + at.f_ncvx + at.grad_ncvx.dot(w - wk) +
             0.5 * tau_mm * (w - wk).squaredNorm();
    };
    const auto q_model = [&](const Eigen::VectorXd& w) {
      return f_cvx(w) + at.f_ncvx + at.grad_ncvx.dot(w - wk) +
             0.5 * (w - wk).dot(h_ncvx * (w - wk));
    };

    const double tol = 1e-10 * (1.0 + at.grad.cwiseAbs().maxCoeff());
    using Model = std::function<double(const Eigen::VectorXd&)>;
    for (const Model& model : {Model(dc_model), Model(mm_model), Model(q_model)}) {
      const Eigen::VectorXd fd = test_support::central_diff_grad(model, wk, 1e-6);
      CHECK((fd - at.grad).cwiseAbs().maxCoeff() <= tol + 1e-8 * at.grad.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("quadratic-surrogate assembly reproduces the gradient identity") {
  const MomentSet m = panel_moments(37, 9, 70);
  const MvskSpec spec = hop::crra_lambdas(12.0);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd wk = test_support::sample_feasible(rng, 9, 2.0);
    const hop::MvskValue at = hop::mvsk_objective(wk, m, spec);
    const hop::MomentDerivatives md = hop::moment_derivatives(wk, m);
    const Eigen::MatrixXd h =
        hop::nearest_psd(-spec.lambda3 * md.hess3 + spec.lambda4 * md.hess4);
    const Eigen::MatrixXd quad = 2.0 * spec.lambda2 * m.covariance() + h;
    const Eigen::VectorXd lin = -spec.lambda1 * m.mean() + at.grad_ncvx - h * wk;
    const double err = (quad * wk + lin - at.grad).cwiseAbs().maxCoeff();
    CHECK(err <= 1e-12 * (1.0 + at.grad.cwiseAbs().maxCoeff()));
  }
}

// ---------------------------------------------------------------------------
// Oracle: sampled global majorization

TEST_CASE("majorization surrogate lies above the objective everywhere sampled") {
  std::mt19937_64 rng(17);
  for (const std::uint64_t seed : {41ULL, 42ULL}) {
    const MomentSet m = panel_moments(seed, 8, 60);
    const MvskSpec spec = hop::crra_lambdas(10.0);
    const double leverage = 1.7;
    const double tau = hop::mm_tau(m, spec, leverage);

    const Eigen::VectorXd wk = test_support::sample_feasible(rng, 8, leverage);
    const hop::MvskValue at = hop::mvsk_objective(wk, m, spec);

    int violations = 0;
    for (int i = 0; i < 10000; ++i) {
      const Eigen::VectorXd w = test_support::sample_feasible(rng, 8, leverage);
      const double surrogate = -spec.lambda1 * w.dot(m.mean()) +
                               spec.lambda2 * w.dot(m.covariance() * w) + at.f_ncvx +
                               at.grad_ncvx.dot(w - wk) + 0.5 * tau * (w - wk).squaredNorm();
      if (surrogate < objective_at(w, m, spec) - 1e-9) ++violations;
    }
    REQUIRE(violations == 0);
    CHECK(std::abs((-spec.lambda1 * wk.dot(m.mean()) + spec.lambda2 * wk.dot(m.covariance() * wk) +
                    at.f_ncvx) -
                   at.f) <= 1e-12 * (1.0 + std::abs(at.f)));
  }
}

// ---------------------------------------------------------------------------
// Monotonicity and iterate feasibility

TEST_CASE("unit-step algorithms never let the objective rise") {
  const MvskSpec spec = hop::crra_lambdas(10.0);
  const FeasibleSet fs{10, 1.5};
  ScaOptions opts;
  opts.max_iter = 40;
  for (std::uint64_t seed = 100; seed < 112; ++seed) {
    const MomentSet m = panel_moments(seed, 10, 80);
    for (auto* solve : {&hop::solve_mvsk_dc, &hop::solve_mvsk_mm}) {
      const SolveReport rep = (*solve)(m, spec, fs, opts);
      for (std::size_t i = 1; i < rep.trace.size(); ++i) {
        INFO("seed " << seed << " iteration " << rep.trace[i].k);
        REQUIRE(rep.trace[i].objective <= rep.trace[i - 1].objective);
      }
    }
  }
}

TEST_CASE("quadratic-surrogate iterates stay feasible throughout") {
  const MomentSet m = panel_moments(55, 10, 90);
  const MvskSpec spec = hop::crra_lambdas(10.0);
  const FeasibleSet fs{10, 2.0};
  ScaOptions opts;
  opts.max_iter = 150;
  const SolveReport rep = hop::solve_mvsk_q(m, spec, fs, opts);
  for (const hop::IterationRecord& rec : rep.trace) REQUIRE(rec.max_violation <= 1e-9);
  CHECK(fs.contains(rep.w, 1e-9));
}

// ---------------------------------------------------------------------------
// Termination semantics

TEST_CASE("restarting from the solution is recognized within two iterations") {
  const MomentSet m = panel_moments(61, 6, 70);
  const MvskSpec spec = hop::crra_lambdas(10.0);
  const FeasibleSet fs{6, 1.4};
  const SolveReport first = hop::solve_mvsk_mm(m, spec, fs, {});
  REQUIRE(first.termination == Termination::converged);

  ScaOptions again;
  again.w_start = first.w;
  const SolveReport second = hop::solve_mvsk_mm(m, spec, fs, again);
  CHECK(second.termination == Termination::converged);
  CHECK(second.iterations <= 2);
}

TEST_CASE("converged runs pass an independent stationarity check") {
  const MvskSpec spec = hop::crra_lambdas(10.0);
  const FeasibleSet fs{8, 1.6};
  for (std::uint64_t seed = 200; seed < 203; ++seed) {
    const MomentSet m = panel_moments(seed, 8, 80);
    for (auto* solve : {&hop::solve_mvsk_dc, &hop::solve_mvsk_mm, &hop::solve_mvsk_q}) {
      const SolveReport rep = (*solve)(m, spec, fs, {});
      if (rep.termination != Termination::converged) continue;
      INFO("seed " << seed);
      CHECK(reference_stationarity(rep.w, m, spec, fs) <= 1e-5);
      CHECK(rep.feasibility <= 1e-6);
    }
  }
}

TEST_CASE("iteration caps are honored and reported") {
  const MomentSet m = panel_moments(71, 8, 60);
  const MvskSpec spec = hop::crra_lambdas(10.0);
  const FeasibleSet fs{8, 1.5};
  ScaOptions opts;
  opts.max_iter = 3;
  const SolveReport rep = hop::solve_mvsk_dc(m, spec, fs, opts);
  CHECK(rep.iterations <= 3);
  CHECK(rep.trace.size() == static_cast<std::size_t>(rep.iterations) + 1);
}

TEST_CASE("reports are internally consistent") {
  const MomentSet m = panel_moments(83, 7, 70);
  const MvskSpec spec = hop::crra_lambdas(6.0);
  const FeasibleSet fs{7, 1.5};
  for (auto* solve : {&hop::solve_mvsk_dc, &hop::solve_mvsk_mm, &hop::solve_mvsk_q}) {
    const SolveReport rep = (*solve)(m, spec, fs, {});
    REQUIRE(rep.trace.size() == static_cast<std::size_t>(rep.iterations) + 1);
    CHECK(rep.subsolver_calls == rep.iterations);
    for (std::size_t i = 0; i < rep.trace.size(); ++i) {
      const hop::IterationRecord& rec = rep.trace[i];
      CHECK(rec.k == static_cast<int>(i));
      CHECK(std::isfinite(rec.objective));
      CHECK(std::isfinite(rec.gamma));
      CHECK(std::isfinite(rec.max_violation));
      CHECK(std::isfinite(rec.stationarity));
      CHECK(std::isfinite(rec.wall_ms));
      CHECK(rec.wall_ms >= 0.0);
    }
    CHECK(rep.trace.back().objective == Catch::Approx(rep.objective).margin(1e-15));
    CHECK(rep.w.size() == 7);
  }
}

TEST_CASE("quadratic-surrogate trace records the diminishing steps") {
  const MomentSet m = panel_moments(91, 5, 60);
  const MvskSpec spec = hop::crra_lambdas(10.0);
  const FeasibleSet fs{5, 1.5};
  ScaOptions opts;
  opts.max_iter = 6;
  const SolveReport rep = hop::solve_mvsk_q(m, spec, fs, opts);
  for (int k = 1; k <= rep.iterations; ++k)
    CHECK(rep.trace[static_cast<std::size_t>(k)].gamma ==
          Catch::Approx(hop::step_size(k - 1)).margin(1e-12));
}

// ---------------------------------------------------------------------------
// Relative algorithm behavior

TEST_CASE("retaining the exact convex part needs no more iterations than full linearization") {
  const MvskSpec spec = hop::crra_lambdas(10.0);
  const FeasibleSet fs{10, 1.5};
  ScaOptions opts;
  opts.max_iter = 1000;
  int wins = 0, total = 0;
  for (std::uint64_t seed = 300; seed < 330; ++seed) {
    const MomentSet m = panel_moments(seed, 10, 80);
    const SolveReport dc = hop::solve_mvsk_dc(m, spec, fs, opts);
    const SolveReport mm = hop::solve_mvsk_mm(m, spec, fs, opts);
    ++total;
    if (mm.iterations <= dc.iterations) ++wins;
  }
  INFO(wins << " of " << total);
  CHECK(wins * 5 >= total * 4);  // at least 80%
}

// ---------------------------------------------------------------------------
// Input validation

TEST_CASE("mismatched or infeasible starts are rejected") {
  const MomentSet m = panel_moments(99, 5, 50);
  const MvskSpec spec = hop::crra_lambdas(10.0);

  CHECK_THROWS_AS(hop::solve_mvsk_dc(m, spec, FeasibleSet{4, 1.5}, {}), hop::DimensionError);

  ScaOptions bad_len;
  bad_len.w_start = Eigen::VectorXd::Ones(3);
  CHECK_THROWS_AS(hop::solve_mvsk_mm(m, spec, FeasibleSet{5, 1.5}, bad_len),
                  hop::DimensionError);

  ScaOptions infeasible;
  infeasible.w_start = Eigen::VectorXd::Ones(5);  // sums to 5
  CHECK_THROWS_AS(hop::solve_mvsk_q(m, spec, FeasibleSet{5, 1.5}, infeasible), hop::DataError);
}
