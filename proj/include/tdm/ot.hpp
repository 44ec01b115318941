#pragma once

#include <optional>
#include <string>

#include "tdm/error.hpp"
#include "tdm/types.hpp"

namespace tdm {

enum class OtSolver { ExactAssignment, Sinkhorn, BruteForce };

std::string to_string(OtSolver s);

struct OtResult {
  double distance = 0.0;  // <plan, cost>
  Matrix plan;
  Vector row_marginal;
  Vector col_marginal;
  OtSolver solver = OtSolver::ExactAssignment;
  Index iterations = 0;                  // Sinkhorn only
  std::optional<IndexList> assignment;   // row i -> column, exact solvers only
};

struct SinkhornConfig {
  double epsilon = 0.05;
  Index max_iters = 5000;
  double tol = 1e-6;  // L1 violation of the row marginal
};

/// Squared Euclidean distances between the rows of `a` and the rows of `c`.
/// Tiny negative values from cancellation are clamped to zero.
template <typename DerivedA, typename DerivedC>
MatrixX<typename DerivedA::Scalar> pairwise_sq_cost(const Eigen::MatrixBase<DerivedA>& a,
                                                    const Eigen::MatrixBase<DerivedC>& c) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != c.cols()) throw DataError("pairwise cost: feature dimensions differ");
  const VectorX<Scalar> na = a.rowwise().squaredNorm();
  const VectorX<Scalar> nc = c.rowwise().squaredNorm();
  MatrixX<Scalar> g = (-2 * (a * c.transpose())).eval();
  g.colwise() += na;
  g.rowwise() += nc.transpose();
  return g.cwiseMax(Scalar(0));
}

/// Min-cost perfect matching for a square cost (shortest augmenting paths
/// with dual potentials, O(B^3)). Ties resolve towards the lowest column
/// index, so results are deterministic.
IndexList solve_assignment(const Matrix& cost);

/// Exact OT between two uniform empirical measures of equal size B:
/// distance = (1/B) * min over permutations of sum_i cost(i, pi(i)).
OtResult exact_ot_uniform(const Matrix& cost);

/// Enumerates all B! permutations. Oracle for exact_ot_uniform, B <= 8.
OtResult brute_force_ot(const Matrix& cost);

/// Log-domain Sinkhorn for entropic OT. The final plan is rounded onto the
/// transport polytope, so its marginals hold exactly and `distance` (the
/// unregularized cost of the plan) is an upper bound on the exact value.
OtResult sinkhorn(const Matrix& cost, const Vector& a, const Vector& b, const SinkhornConfig& cfg);

/// 0.05 * median pairwise squared distance over (a strided subsample of at
/// most 1000) rows, floored at 1e-6.
double default_epsilon(const Matrix& data);

/// Gradient of <P, G(za, zb)> with respect to za, P held fixed:
/// row i = 2 * sum_j P(i, j) (za_i - zb_j).
Matrix ot_grad_supports(const Matrix& plan, const Matrix& za, const Matrix& zb);

/// Exact W2^2 between uniform empirical measures of possibly different sizes,
/// by replicating rows up to lcm(|a|, |c|) and solving an assignment.
double w22_exact(const Matrix& a, const Matrix& c);

}  // namespace tdm
