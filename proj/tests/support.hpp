#pragma once

// Shared test fixtures and reference oracles. The oracles here deliberately
// use the slowest, most literal formulations (entrywise sample means over raw
// observations, central finite differences, rejection-free simplex sampling)
// so that they share no code path with the library implementations they check.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hop/types.hpp"

namespace test_support {

// ---------------------------------------------------------------------------
// Panels

/// Deterministic skewed, cross-correlated returns panel at daily-return scale.
inline hop::ReturnsMatrix make_panel(std::uint64_t seed, int n, int t, double scale = 0.02) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(4.0, 1.0);
  auto shock = [&] { return (gamma(rng) - 4.0) / 2.0; };  // mean 0, var 1, skew 1

  hop::ReturnsMatrix r;
  r.values.resize(t, n);
  for (int j = 0; j < n; ++j) r.tickers.push_back("A" + std::to_string(j + 1));
  for (int ti = 0; ti < t; ++ti) {
    const double common = shock();
    for (int j = 0; j < n; ++j)
      r.values(ti, j) = scale * (shock() + 0.5 * common) + 2e-4 * (j + 1);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Entrywise tensor oracle: plain sample means of centered products.

struct NaiveMoments {
  int n = 0;
  Eigen::VectorXd mu;
  Eigen::MatrixXd centered;  // T x N

  double sigma(int i, int j) const { return mean_product({i, j}); }
  double phi(int i, int j, int k) const { return mean_product({i, j, k}); }
  double psi(int i, int j, int k, int l) const { return mean_product({i, j, k, l}); }

  double mean_product(std::vector<int> idx) const {
    double acc = 0.0;
    for (int t = 0; t < centered.rows(); ++t) {
      double p = 1.0;
      for (int i : idx) p *= centered(t, i);
      acc += p;
    }
    return acc / static_cast<double>(centered.rows());
  }
};

inline NaiveMoments naive_moments(const hop::ReturnsMatrix& r) {
  NaiveMoments nm;
  nm.n = r.assets();
  nm.mu = r.values.colwise().mean();
  nm.centered = r.values.rowwise() - nm.mu.transpose();
  return nm;
}

/// Portfolio moments from per-observation powers of w'centered returns.
struct NaivePortfolioMoments {
  double phi1, phi2, phi3, phi4;
};

inline NaivePortfolioMoments naive_portfolio_moments(const hop::ReturnsMatrix& r,
                                                     const Eigen::VectorXd& w) {
  NaiveMoments nm = naive_moments(r);
  Eigen::VectorXd port = nm.centered * w;
  const double t = static_cast<double>(r.periods());
  NaivePortfolioMoments out{};
  out.phi1 = w.dot(nm.mu);
  out.phi2 = port.array().square().sum() / t;
  out.phi3 = port.array().cube().sum() / t;
  out.phi4 = port.array().pow(4).sum() / t;
  return out;
}

/// phi3/phi4 of w directly from the naive entrywise tensors (Kronecker sum).
inline double naive_phi3(const NaiveMoments& nm, const Eigen::VectorXd& w) {
  double acc = 0.0;
  for (int i = 0; i < nm.n; ++i)
    for (int j = 0; j < nm.n; ++j)
      for (int k = 0; k < nm.n; ++k) acc += w[i] * w[j] * w[k] * nm.phi(i, j, k);
  return acc;
}

inline double naive_phi4(const NaiveMoments& nm, const Eigen::VectorXd& w) {
  double acc = 0.0;
  for (int i = 0; i < nm.n; ++i)
    for (int j = 0; j < nm.n; ++j)
      for (int k = 0; k < nm.n; ++k)
        for (int l = 0; l < nm.n; ++l)
          acc += w[i] * w[j] * w[k] * w[l] * nm.psi(i, j, k, l);
  return acc;
}

// ---------------------------------------------------------------------------
// Finite differences

template <typename F>
Eigen::VectorXd central_diff_grad(F&& f, const Eigen::VectorXd& w, double h = 1e-5) {
  Eigen::VectorXd g(w.size());
  Eigen::VectorXd wp = w, wm = w;
  for (int i = 0; i < w.size(); ++i) {
    wp[i] = w[i] + h;
    wm[i] = w[i] - h;
    g[i] = (f(wp) - f(wm)) / (2.0 * h);
    wp[i] = w[i];
    wm[i] = w[i];
  }
  return g;
}

template <typename G>
Eigen::MatrixXd central_diff_jacobian(G&& g, const Eigen::VectorXd& w, double h = 1e-5) {
  Eigen::VectorXd g0 = g(w);
  Eigen::MatrixXd jac(g0.size(), w.size());
  Eigen::VectorXd wp = w, wm = w;
  for (int i = 0; i < w.size(); ++i) {
    wp[i] = w[i] + h;
    wm[i] = w[i] - h;
    jac.col(i) = (g(wp) - g(wm)) / (2.0 * h);
    wp[i] = w[i];
    wm[i] = w[i];
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Feasible-set sampling: w = p - q with p on the (1+t)-simplex, q on the
// t-simplex, 2t <= L - 1, which satisfies 1'w = 1 and ||w||_1 <= L.

inline Eigen::VectorXd dirichlet(std::mt19937_64& rng, int n) {
  std::exponential_distribution<double> expo(1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = expo(rng);
  return v / v.sum();
}

inline Eigen::VectorXd sample_feasible(std::mt19937_64& rng, int n, double leverage) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double t = 0.5 * (leverage - 1.0) * uni(rng);
  return (1.0 + t) * dirichlet(rng, n) - t * dirichlet(rng, n);
}

// ---------------------------------------------------------------------------
// Scratch files

inline std::string temp_path(const std::string& name) {
  static const std::string dir = [] {
    auto d = std::filesystem::temp_directory_path() / "hop_tests";
    std::filesystem::create_directories(d);
    return d.string();
  }();
  return dir + "/" + name;
}

}  // namespace test_support
