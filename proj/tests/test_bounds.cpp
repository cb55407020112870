#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <random>

#include "hop/bounds.hpp"
#include "hop/moments.hpp"
#include "support.hpp"

using namespace hop;
using test_support::make_panel;

namespace {

double spectral_radius(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("dc bound reduces to the covariance term when l3 = l4 = 0") {
  ReturnsMatrix r = make_panel(41, 3, 30);
  MomentSet m = MomentSet::estimate(r);
  MvskSpec spec{1.0, 2.5, 0.0, 0.0};
  const double inf_norm = m.covariance().cwiseAbs().rowwise().sum().maxCoeff();
  REQUIRE(dc_tau(m, spec, 1.0) == Catch::Approx(2.0 * 2.5 * inf_norm).epsilon(1e-14));
  REQUIRE(mm_tau(m, spec, 1.0) == 0.0);
}

TEST_CASE("single-asset bounds collapse to scalar formulas") {
  ReturnsMatrix r = make_panel(42, 1, 40);
  MomentSet m = MomentSet::estimate(r);
  const double s2 = m.covariance()(0, 0);
  const double c3 = m.coskewness()(0, 0);
  const double c4 = m.cokurtosis()(0, 0);
  MvskSpec spec = crra_lambdas(4.0);
  const double lev = 1.0;
  const double expect = 2.0 * spec.lambda2 * s2 + 6.0 * spec.lambda3 * std::abs(c3) +
                        12.0 * spec.lambda4 * std::abs(c4);
  REQUIRE(dc_tau(m, spec, lev) == Catch::Approx(expect).epsilon(1e-14));
  // With one asset the max and the sum over trailing indices coincide.
  const double expect_mm =
      6.0 * spec.lambda3 * std::abs(c3) + 12.0 * spec.lambda4 * std::abs(c4);
  REQUIRE(mm_tau(m, spec, lev) == Catch::Approx(expect_mm).epsilon(1e-14));
}

TEST_CASE("bounds dominate sampled Hessian spectral radii") {
  const int n = 3;
  ReturnsMatrix r = make_panel(43, n, 60);
  MomentSet m = MomentSet::estimate(r);
  MvskSpec spec = crra_lambdas(10.0);
  const double lev = 1.5;
  const double tau_dc = dc_tau(m, spec, lev);
  const double tau_mm = mm_tau(m, spec, lev);
  REQUIRE(tau_mm <= tau_dc + 1e-18);

  std::mt19937_64 rng(77);
  double worst_full = 0.0, worst_ncvx = 0.0;
  for (int s = 0; s < 10000; ++s) {
    Eigen::VectorXd w = test_support::sample_feasible(rng, n, lev);
    Eigen::MatrixXd h3 = hess_phi3(w, m), h4 = hess_phi4(w, m);
    Eigen::MatrixXd ncvx = -spec.lambda3 * h3 + spec.lambda4 * h4;
    Eigen::MatrixXd full = 2.0 * spec.lambda2 * m.covariance() + ncvx;
    worst_full = std::max(worst_full, spectral_radius(full));
    worst_ncvx = std::max(worst_ncvx, spectral_radius(ncvx));
  }
  REQUIRE(worst_full <= tau_dc);
  REQUIRE(worst_ncvx <= tau_mm);
  REQUIRE(worst_full > 0.0);
}

TEST_CASE("mm bound never exceeds the high-order part of the dc bound") {
  for (std::uint64_t seed : {44u, 45u, 46u}) {
    ReturnsMatrix r = make_panel(seed, 4, 35);
    MomentSet m = MomentSet::estimate(r);
    MvskSpec high{0.0, 0.0, 2.0, 3.0};  // isolates the order-3/4 terms
    for (double lev : {1.0, 1.6, 2.5})
      REQUIRE(mm_tau(m, high, lev) <= dc_tau(m, high, lev) * (1.0 + 1e-14));
  }
}

TEST_CASE("psd projection fixes PSD inputs and clamps negative eigenvalues") {
  SECTION("already PSD") {
    Eigen::MatrixXd a(2, 2);
    a << 2.0, 1.0, 1.0, 2.0;
    REQUIRE((nearest_psd(a) - a).norm() <= 1e-12 * a.norm());
  }
  SECTION("diag(1,-1) maps to diag(1,0)") {
    Eigen::MatrixXd a = Eigen::Vector2d(1.0, -1.0).asDiagonal();
    Eigen::MatrixXd want = Eigen::Vector2d(1.0, 0.0).asDiagonal();
    REQUIRE((nearest_psd(a) - want).norm() <= 1e-14);
  }
  SECTION("idempotent") {
    std::mt19937_64 rng(55);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::MatrixXd g(5, 5);
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) g(i, j) = nd(rng);
      Eigen::MatrixXd sym = 0.5 * (g + g.transpose());
      Eigen::MatrixXd once = nearest_psd(sym);
      Eigen::MatrixXd twice = nearest_psd(once);
      REQUIRE((twice - once).norm() <= 1e-12 * std::max(1.0, once.norm()));
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(once);
      REQUIRE(es.eigenvalues().minCoeff() >= -1e-14);
      REQUIRE((once - once.transpose()).norm() == 0.0);
    }
  }
}

TEST_CASE("psd projection is Frobenius-closest among random PSD candidates") {
  std::mt19937_64 rng(56);
  std::normal_distribution<double> nd;
  auto random_sym = [&](int n) {
    Eigen::MatrixXd g(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) g(i, j) = nd(rng);
    return Eigen::MatrixXd(0.5 * (g + g.transpose()));
  };
  const int n = 4;
  for (int instance = 0; instance < 10; ++instance) {
    Eigen::MatrixXd a = random_sym(n);
    Eigen::MatrixXd proj = nearest_psd(a);
    const double best = (a - proj).norm();
    for (int c = 0; c < 100; ++c) {
      Eigen::MatrixXd g = random_sym(n);
      Eigen::MatrixXd candidate = g * g.transpose();  // random PSD
      REQUIRE(best <= (a - candidate).norm() + 1e-12);
    }
  }
}

TEST_CASE("psd projection input guards") {
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 1.0, -1.0, 1.0;  // asymmetry far beyond 1e-8 relative
  REQUIRE_THROWS_AS(nearest_psd(bad), DataError);

  Eigen::MatrixXd nonsq(2, 3);
  nonsq.setZero();
  REQUIRE_THROWS_AS(nearest_psd(nonsq), DimensionError);

  Eigen::MatrixXd nan2 = Eigen::MatrixXd::Zero(2, 2);
  nan2(0, 0) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(nearest_psd(nan2), DataError);

  // Mild asymmetry within the tolerance is symmetrized, not rejected.
  Eigen::MatrixXd mild(2, 2);
  mild << 1.0, 0.5, 0.5 + 1e-10, 1.0;
  REQUIRE_NOTHROW(nearest_psd(mild));
}
