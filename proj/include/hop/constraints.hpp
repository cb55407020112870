#pragma once

// Linear constraint systems (equalities plus inequalities) and the lifted
// encoding of the budget-and-leverage feasible set
//   W = {w : 1'w = 1, ||w||_1 <= L}
// as the polyhedron over (w, u)
//   1'w = 1,  w - u <= 0,  -w - u <= 0,  1'u <= L,
// whose w-projection is exactly W. When L = 1 the set reduces to the
// no-shorting simplex {1'w = 1, w >= 0}; solvers use that n-variable form
// directly because the lifted polyhedron has no interior at L = 1 (u is
// pinned to |w|), which path-following and barrier methods cannot tolerate.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "hop/types.hpp"

namespace hop {

/// eq_a x = eq_b, in_a x <= in_b over `vars` variables. Either block may be
/// empty (zero rows).
struct LinearConstraintSystem {
  int vars = 0;
  Eigen::MatrixXd eq_a;
  Eigen::VectorXd eq_b;
  Eigen::MatrixXd in_a;
  Eigen::VectorXd in_b;

  int eq_rows() const { return static_cast<int>(eq_a.rows()); }
  int in_rows() const { return static_cast<int>(in_a.rows()); }
};

inline void validate_constraints(const LinearConstraintSystem& c) {
  if (c.vars < 1) throw DimensionError("constraint system needs at least one variable");
  if (c.eq_a.cols() != c.vars && c.eq_rows() > 0)
    throw DimensionError("equality block column count does not match variable count");
  if (c.in_a.cols() != c.vars && c.in_rows() > 0)
    throw DimensionError("inequality block column count does not match variable count");
  if (c.eq_b.size() != c.eq_rows() || c.in_b.size() != c.in_rows())
    throw DimensionError("constraint right-hand side sizes do not match row counts");
  if ((c.eq_rows() > 0 && !c.eq_a.allFinite()) || !c.eq_b.allFinite() ||
      (c.in_rows() > 0 && !c.in_a.allFinite()) || !c.in_b.allFinite())
    throw DataError("constraint system has non-finite entries");
}

/// Largest constraint residual of x under the system (0 when feasible).
inline double constraint_violation(const LinearConstraintSystem& c, const Eigen::VectorXd& x) {
  double v = 0.0;
  if (c.eq_rows() > 0) v = (c.eq_a * x - c.eq_b).cwiseAbs().maxCoeff();
  if (c.in_rows() > 0) v = std::max(v, (c.in_a * x - c.in_b).maxCoeff());
  return std::max(v, 0.0);
}

/// Incremental row builder over a fixed variable count.
class ConstraintBuilder {
 public:
  explicit ConstraintBuilder(int vars) : vars_(vars) {}

  void add_eq(const Eigen::VectorXd& row, double rhs) { eq_.emplace_back(row, rhs); }
  void add_in(const Eigen::VectorXd& row, double rhs) { in_.emplace_back(row, rhs); }

  /// Copies an existing system's rows into columns [offset, offset+sys.vars).
  void embed(const LinearConstraintSystem& sys, int offset) {
    for (int r = 0; r < sys.eq_rows(); ++r) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(vars_);
      row.segment(offset, sys.vars) = sys.eq_a.row(r);
      add_eq(row, sys.eq_b[r]);
    }
    for (int r = 0; r < sys.in_rows(); ++r) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(vars_);
      row.segment(offset, sys.vars) = sys.in_a.row(r);
      add_in(row, sys.in_b[r]);
    }
  }

  LinearConstraintSystem build() const {
    LinearConstraintSystem c;
    c.vars = vars_;
    c.eq_a.resize(static_cast<Eigen::Index>(eq_.size()), vars_);
    c.eq_b.resize(static_cast<Eigen::Index>(eq_.size()));
    for (std::size_t r = 0; r < eq_.size(); ++r) {
      c.eq_a.row(static_cast<Eigen::Index>(r)) = eq_[r].first;
      c.eq_b[static_cast<Eigen::Index>(r)] = eq_[r].second;
    }
    c.in_a.resize(static_cast<Eigen::Index>(in_.size()), vars_);
    c.in_b.resize(static_cast<Eigen::Index>(in_.size()));
    for (std::size_t r = 0; r < in_.size(); ++r) {
      c.in_a.row(static_cast<Eigen::Index>(r)) = in_[r].first;
      c.in_b[static_cast<Eigen::Index>(r)] = in_[r].second;
    }
    return c;
  }

 private:
  int vars_;
  std::vector<std::pair<Eigen::VectorXd, double>> eq_;
  std::vector<std::pair<Eigen::VectorXd, double>> in_;
};

/// Lifted leverage polyhedron over (w, u), 2n variables, per the header note.
inline LinearConstraintSystem lift_l1(int n, double leverage) {
  if (n < 1) throw DimensionError("lift_l1 needs at least one asset");
  if (!(leverage >= 1.0) || !std::isfinite(leverage))
    throw DataError("leverage must be finite and >= 1");
  ConstraintBuilder b(2 * n);
  Eigen::VectorXd budget = Eigen::VectorXd::Zero(2 * n);
  budget.head(n).setOnes();
  b.add_eq(budget, 1.0);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(2 * n);
    row[i] = 1.0;
    row[n + i] = -1.0;
    b.add_in(row, 0.0);  // w_i - u_i <= 0
    row[i] = -1.0;
    b.add_in(row, 0.0);  // -w_i - u_i <= 0
  }
  Eigen::VectorXd lev = Eigen::VectorXd::Zero(2 * n);
  lev.tail(n).setOnes();
  b.add_in(lev, leverage);
  return b.build();
}

/// Number of decision variables the solvers use for W: n at L = 1 (simplex
/// form), 2n otherwise (lifted form).
inline int weight_vars(int n, double leverage) { return leverage <= 1.0 + 1e-12 ? n : 2 * n; }

/// Constraint system the solvers use for W; see weight_vars.
inline LinearConstraintSystem weight_system(int n, double leverage) {
  if (leverage <= 1.0 + 1e-12) {
    ConstraintBuilder b(n);
    b.add_eq(Eigen::VectorXd::Ones(n), 1.0);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
      row[i] = -1.0;
      b.add_in(row, 0.0);  // w_i >= 0
    }
    return b.build();
  }
  return lift_l1(n, leverage);
}

/// Completes a weight vector to the solver variable space (appends u = |w|
/// in the lifted case); inverse of taking the leading n entries.
inline Eigen::VectorXd embed_weights(const Eigen::VectorXd& w, double leverage) {
  if (leverage <= 1.0 + 1e-12) return w;
  Eigen::VectorXd x(2 * w.size());
  x.head(w.size()) = w;
  x.tail(w.size()) = w.cwiseAbs();
  return x;
}

}  // namespace hop
