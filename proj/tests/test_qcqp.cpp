#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>

#include "hop/kkt.hpp"
#include "hop/qcqp.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// ||x||^2 <= radius^2 as (1/2) x'(2I)x - radius^2 <= 0.
hop::QuadConstraint ball(int n, double radius) {
  hop::QuadConstraint qc;
  qc.q_mat = 2.0 * MatrixXd::Identity(n, n);
  qc.q_vec = VectorXd::Zero(n);
  qc.offset = -radius * radius;
  return qc;
}

hop::QcqpProblem empty_cons_problem(int n) {
  hop::QcqpProblem p;
  p.quad_cost = MatrixXd::Zero(n, n);
  p.lin_cost = VectorXd::Zero(n);
  p.cons.vars = n;
  p.cons.eq_a.resize(0, n);
  p.cons.eq_b.resize(0);
  p.cons.in_a.resize(0, n);
  p.cons.in_b.resize(0);
  return p;
}

}  // namespace

TEST_CASE("linear objective over the unit ball lands on the boundary") {
  hop::QcqpProblem p = empty_cons_problem(2);
  p.lin_cost << 1.0, 0.0;
  p.quads.push_back(ball(2, 1.0));
  hop::SubsolverResult r = hop::solve_qcqp(p);
  REQUIRE(r.status == hop::SolveStatus::optimal);
  CHECK(r.x[0] == Catch::Approx(-1.0).margin(1e-7));
  CHECK(r.x[1] == Catch::Approx(0.0).margin(1e-7));
  // Stationarity e_1 + lambda * 2x = 0 at x = (-1, 0) forces lambda = 1/2.
  REQUIRE(r.quad_dual.size() == 1);
  CHECK(r.quad_dual[0] == Catch::Approx(0.5).margin(1e-6));
  CHECK(hop::qcqp_kkt_residual(p, r) <= 1e-7);
}

TEST_CASE("projection onto the unit ball rescales the target") {
  // min (1/2)||x - c||^2 with ||c|| = 2: solution c / 2.
  VectorXd c(2);
  c << 1.2, -1.6;
  hop::QcqpProblem p = empty_cons_problem(2);
  p.quad_cost = MatrixXd::Identity(2, 2);
  p.lin_cost = -c;
  p.quads.push_back(ball(2, 1.0));
  hop::SubsolverResult r = hop::solve_qcqp(p);
  REQUIRE(r.status == hop::SolveStatus::optimal);
  CHECK(r.x[0] == Catch::Approx(c[0] / 2.0).margin(1e-7));
  CHECK(r.x[1] == Catch::Approx(c[1] / 2.0).margin(1e-7));
  CHECK(hop::qcqp_kkt_residual(p, r) <= 1e-7);
}

TEST_CASE("inactive quadratic constraints leave the equality solution alone") {
  // min (1/2)||x||^2 on x_1 + x_2 = 2 inside a radius-10 ball: (1, 1).
  hop::QcqpProblem p = empty_cons_problem(2);
  p.quad_cost = MatrixXd::Identity(2, 2);
  hop::ConstraintBuilder b(2);
  b.add_eq(VectorXd::Ones(2), 2.0);
  p.cons = b.build();
  p.quads.push_back(ball(2, 10.0));
  hop::SubsolverResult r = hop::solve_qcqp(p);
  REQUIRE(r.status == hop::SolveStatus::optimal);
  CHECK(r.x[0] == Catch::Approx(1.0).margin(1e-6));
  CHECK(r.x[1] == Catch::Approx(1.0).margin(1e-6));
  CHECK(r.quad_dual[0] <= 1e-6);
  CHECK(hop::qcqp_kkt_residual(p, r) <= 1e-7);
}

TEST_CASE("mixed linear and quadratic rows are honored together") {
  // min x_1 + x_2 inside the unit ball with x_2 >= 0.3: the free optimum
  // -(1,1)/sqrt(2) is pushed along the boundary to x_2 = 0.3.
  hop::QcqpProblem p = empty_cons_problem(2);
  p.lin_cost << 1.0, 1.0;
  p.quads.push_back(ball(2, 1.0));
  hop::ConstraintBuilder b(2);
  VectorXd row(2);
  row << 0.0, -1.0;
  b.add_in(row, -0.3);
  p.cons = b.build();
  hop::SubsolverResult r = hop::solve_qcqp(p);
  REQUIRE(r.status == hop::SolveStatus::optimal);
  CHECK(r.x[1] == Catch::Approx(0.3).margin(1e-6));
  CHECK(r.x[0] == Catch::Approx(-std::sqrt(1.0 - 0.09)).margin(1e-6));
  CHECK(hop::qcqp_kkt_residual(p, r) <= 1e-7);
}

TEST_CASE("disjoint ball and halfspace are reported infeasible") {
  hop::QcqpProblem p = empty_cons_problem(2);
  p.lin_cost << 1.0, 0.0;
  p.quads.push_back(ball(2, 1.0));
  hop::ConstraintBuilder b(2);
  VectorXd row(2);
  row << -1.0, 0.0;
  b.add_in(row, -3.0);  // x_1 >= 3
  p.cons = b.build();
  hop::SubsolverResult r = hop::solve_qcqp(p);
  CHECK(r.status == hop::SolveStatus::infeasible);
}

TEST_CASE("start hints never change the answer") {
  // Ball centered at (5, 5): one run starts from the center, one runs cold,
  // one starts from an infeasible point, and all land on (4, 5).
  VectorXd c(2);
  c << 5.0, 5.0;
  hop::QcqpProblem p = empty_cons_problem(2);
  p.lin_cost << 1.0, 0.0;
  hop::QuadConstraint qc;
  qc.q_mat = 2.0 * MatrixXd::Identity(2, 2);
  qc.q_vec = -2.0 * c;
  qc.offset = c.squaredNorm() - 1.0;
  p.quads.push_back(qc);

  hop::SubsolverOptions opts;
  opts.x0 = c;
  hop::SubsolverResult r = hop::solve_qcqp(p, opts);
  REQUIRE(r.status == hop::SolveStatus::optimal);
  CHECK(r.x[0] == Catch::Approx(4.0).margin(1e-6));
  CHECK(r.x[1] == Catch::Approx(5.0).margin(1e-6));

  hop::SubsolverResult cold = hop::solve_qcqp(p);
  REQUIRE(cold.status == hop::SolveStatus::optimal);
  CHECK((r.x - cold.x).cwiseAbs().maxCoeff() <= 1e-6);

  hop::SubsolverOptions bad;
  bad.x0 = VectorXd::Zero(2);  // outside the ball
  hop::SubsolverResult ignored = hop::solve_qcqp(p, bad);
  REQUIRE(ignored.status == hop::SolveStatus::optimal);
  CHECK((ignored.x - cold.x).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("per-iteration objective trace settles on the reported optimum") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 3;
    hop::QcqpProblem p = empty_cons_problem(n);
    p.lin_cost = VectorXd::NullaryExpr(n, [&](Eigen::Index) { return nd(rng); });
    p.quads.push_back(ball(n, 1.0 + 0.5 * trial));
    hop::SubsolverResult r = hop::solve_qcqp(p);
    REQUIRE(r.status == hop::SolveStatus::optimal);
    REQUIRE(r.stage_objectives.size() >= 2);
    const double f = p.objective(r.x);
    CHECK(r.stage_objectives.back() == Catch::Approx(f).margin(1e-10));
    // The tail of the trace has converged, not merely the final entry.
    const std::size_t last = r.stage_objectives.size() - 1;
    for (std::size_t k = last >= 2 ? last - 2 : 0; k <= last; ++k)
      CHECK(std::abs(r.stage_objectives[k] - f) <= 1e-5 * (1.0 + std::abs(f)));
  }
}

TEST_CASE("ellipse intersections match a grid search") {
  // min x_1 + 2 x_2 over two shifted ellipses; oracle scans a fine grid and
  // the solver must land at least as low, up to grid resolution.
  hop::QcqpProblem p = empty_cons_problem(2);
  p.lin_cost << 1.0, 2.0;
  hop::QuadConstraint e1;
  e1.q_mat = (MatrixXd(2, 2) << 4.0, 0.0, 0.0, 1.0).finished();
  e1.q_vec = VectorXd::Zero(2);
  e1.offset = -1.0;  // 2 x1^2 + x2^2/2 <= 1
  hop::QuadConstraint e2;
  e2.q_mat = (MatrixXd(2, 2) << 1.0, 0.4, 0.4, 2.0).finished();
  e2.q_vec = (VectorXd(2) << 0.2, -0.1).finished();
  e2.offset = -0.8;
  p.quads.push_back(e1);
  p.quads.push_back(e2);

  double best = std::numeric_limits<double>::infinity();
  const int grid = 600;
  for (int i = 0; i <= grid; ++i) {
    for (int j = 0; j <= grid; ++j) {
      VectorXd x(2);
      x << -1.5 + 3.0 * i / grid, -1.5 + 3.0 * j / grid;
      if (e1.value(x) <= 0.0 && e2.value(x) <= 0.0)
        best = std::min(best, p.objective(x));
    }
  }
  REQUIRE(std::isfinite(best));

  hop::SubsolverResult r = hop::solve_qcqp(p);
  REQUIRE(r.status == hop::SolveStatus::optimal);
  CHECK(p.objective(r.x) <= best + 1e-9);   // at least as good as the grid
  CHECK(p.objective(r.x) >= best - 2e-2);   // and the grid is near-tight
  CHECK(hop::qcqp_kkt_residual(p, r) <= 1e-7);
}

TEST_CASE("random quadratically constrained instances satisfy optimality") {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> nd;
  hop::SubsolverOptions opts;
  opts.tol = 1e-9;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 3);
    hop::QcqpProblem p = empty_cons_problem(n);
    MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = nd(rng);
    p.quad_cost = a.transpose() * a / n + 0.1 * MatrixXd::Identity(n, n);
    p.lin_cost = VectorXd::NullaryExpr(n, [&](Eigen::Index) { return nd(rng); });
    // Center each ellipsoid near the origin and give it slack there so the
    // intersection has interior.
    for (int k = 0; k < 2; ++k) {
      MatrixXd c(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) c(i, j) = nd(rng);
      hop::QuadConstraint qc;
      qc.q_mat = c.transpose() * c / n + 0.05 * MatrixXd::Identity(n, n);
      qc.q_vec = 0.1 * VectorXd::NullaryExpr(n, [&](Eigen::Index) { return nd(rng); });
      qc.offset = -1.0;
      p.quads.push_back(qc);
    }
    hop::ConstraintBuilder b(n);
    b.add_eq(VectorXd::Ones(n), 0.1);
    p.cons = b.build();

    hop::SubsolverResult r = hop::solve_qcqp(p, opts);
    REQUIRE(r.status == hop::SolveStatus::optimal);
    CHECK(hop::qcqp_kkt_residual(p, r) <= 1e-7);
    CHECK(!r.stage_objectives.empty());
  }
}

TEST_CASE("problems without quadratic rows fall back to the quadratic path") {
  hop::QcqpProblem p = empty_cons_problem(3);
  p.quad_cost = MatrixXd::Identity(3, 3);
  hop::ConstraintBuilder b(3);
  b.add_eq(VectorXd::Ones(3), 1.0);
  for (int i = 0; i < 3; ++i) {
    VectorXd row = VectorXd::Zero(3);
    row[i] = -1.0;
    b.add_in(row, 0.0);
  }
  p.cons = b.build();
  hop::SubsolverResult r = hop::solve_qcqp(p);
  REQUIRE(r.status == hop::SolveStatus::optimal);
  for (int i = 0; i < 3; ++i) CHECK(r.x[i] == Catch::Approx(1.0 / 3.0).margin(1e-8));
  CHECK(r.stage_objectives.empty());
}

TEST_CASE("malformed quadratic constraints are rejected") {
  hop::QcqpProblem p = empty_cons_problem(2);
  hop::QuadConstraint qc = ball(2, 1.0);
  qc.q_mat(0, 1) = 0.7;  // asymmetric
  p.quads.push_back(qc);
  CHECK_THROWS_AS(hop::solve_qcqp(p), hop::DataError);

  p.quads.clear();
  qc = ball(2, 1.0);
  qc.q_mat(1, 1) = -2.0;
  qc.q_mat(0, 1) = qc.q_mat(1, 0) = 0.0;  // indefinite
  p.quads.push_back(qc);
  CHECK_THROWS_AS(hop::solve_qcqp(p), hop::DataError);

  p.quads.clear();
  qc = ball(3, 1.0);  // wrong dimension
  p.quads.push_back(qc);
  CHECK_THROWS_AS(hop::solve_qcqp(p), hop::DimensionError);
}
