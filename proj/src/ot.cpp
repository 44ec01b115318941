#include "tdm/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tdm {

namespace {

void require_finite(const Matrix& cost) {
  if (!cost.allFinite()) throw NumericalError("non-finite entry in OT cost matrix");
}

void require_square(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw DataError("uniform OT needs a square cost matrix");
  if (cost.rows() == 0) throw DataError("empty cost matrix");
  require_finite(cost);
}

OtResult permutation_result(const Matrix& cost, const IndexList& perm, OtSolver solver) {
  const Index b = cost.rows();
  const double w = 1.0 / static_cast<double>(b);
  OtResult res;
  res.solver = solver;
  res.plan = Matrix::Zero(b, b);
  double total = 0.0;
  for (Index i = 0; i < b; ++i) {
    res.plan(i, perm[static_cast<std::size_t>(i)]) = w;
    total += cost(i, perm[static_cast<std::size_t>(i)]);
  }
  res.distance = total * w;
  res.row_marginal = Vector::Constant(b, w);
  res.col_marginal = Vector::Constant(b, w);
  res.assignment = perm;
  return res;
}

double log_sum_exp(const Eigen::Ref<const Vector>& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

}  // namespace

std::string to_string(OtSolver s) {
  switch (s) {
    case OtSolver::ExactAssignment: return "exact";
    case OtSolver::Sinkhorn: return "sinkhorn";
    case OtSolver::BruteForce: return "brute_force";
  }
  return "unknown";
}

IndexList solve_assignment(const Matrix& cost) {
  require_square(cost);
  const Index n = cost.rows();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is the virtual root of each search tree.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Index> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Index i0 = match[j0];
      double delta = kInf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  IndexList perm(static_cast<std::size_t>(n));
  for (Index j = 1; j <= n; ++j) perm[static_cast<std::size_t>(match[j] - 1)] = j - 1;
  return perm;
}

OtResult exact_ot_uniform(const Matrix& cost) {
  require_square(cost);
  return permutation_result(cost, solve_assignment(cost), OtSolver::ExactAssignment);
}

OtResult brute_force_ot(const Matrix& cost) {
  require_square(cost);
  const Index b = cost.rows();
  if (b > 8) throw UsageError("brute-force OT is limited to B <= 8");
  IndexList perm(static_cast<std::size_t>(b));
  std::iota(perm.begin(), perm.end(), Index{0});
  IndexList best = perm;
  double best_total = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Index i = 0; i < b; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
    if (total < best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return permutation_result(cost, best, OtSolver::BruteForce);
}

OtResult sinkhorn(const Matrix& cost, const Vector& a, const Vector& b, const SinkhornConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw UsageError("sinkhorn epsilon must be positive");
  if (cfg.max_iters < 1) throw UsageError("sinkhorn needs at least one iteration");
  if (a.size() != cost.rows() || b.size() != cost.cols()) throw DataError("sinkhorn: marginal sizes do not match cost");
  const auto on_simplex = [](const Vector& w) {
    return (w.array() >= 0.0).all() && std::abs(w.sum() - 1.0) < 1e-9;
  };
  if (!on_simplex(a) || !on_simplex(b)) throw DataError("sinkhorn: marginals must lie on the simplex");
  require_finite(cost);

  const double eps = cfg.epsilon;
  const Index n = cost.rows(), m = cost.cols();
  const Vector log_a = a.array().log().matrix();
  const Vector log_b = b.array().log().matrix();
  Vector f = Vector::Zero(n), g = Vector::Zero(m);
  Vector scratch_m(m), scratch_n(n);

  const auto plan_from_potentials = [&]() {
    Matrix p = ((-cost).colwise() + f).rowwise() + g.transpose();
    return (p.array() / eps).exp().matrix().eval();
  };

  Index it = 0;
  for (; it < cfg.max_iters;) {
    for (Index i = 0; i < n; ++i) {
      scratch_m = (g - cost.row(i).transpose()) / eps;
      f(i) = eps * (log_a(i) - log_sum_exp(scratch_m));
    }
    for (Index j = 0; j < m; ++j) {
      scratch_n = (f - cost.col(j)) / eps;
      g(j) = eps * (log_b(j) - log_sum_exp(scratch_n));
    }
    ++it;
    // Columns are exact after the g-update; only rows can be violated.
    double violation = 0.0;
    for (Index i = 0; i < n; ++i) {
      scratch_m = (g - cost.row(i).transpose()).array() / eps + f(i) / eps;
      violation += std::abs(std::exp(log_sum_exp(scratch_m)) - a(i));
    }
    if (violation < cfg.tol) break;
  }

  Matrix plan = plan_from_potentials();
  // Round onto U(a, b).
  const Vector row_scale = (a.array() / plan.rowwise().sum().array()).min(1.0);
  plan = row_scale.asDiagonal() * plan;
  const Vector col_scale = (b.array() / plan.colwise().sum().transpose().array()).min(1.0);
  plan = plan * col_scale.asDiagonal();
  const Vector err_r = a - plan.rowwise().sum();
  const Vector err_c = b - plan.colwise().sum().transpose();
  const double mass = err_r.lpNorm<1>();
  if (mass > 0.0) plan += err_r * err_c.transpose() / mass;

  OtResult res;
  res.solver = OtSolver::Sinkhorn;
  res.iterations = it;
  res.distance = (plan.array() * cost.array()).sum();
  res.plan = std::move(plan);
  res.row_marginal = a;
  res.col_marginal = b;
  if (!std::isfinite(res.distance)) throw NumericalError("sinkhorn produced a non-finite transport cost");
  return res;
}

double default_epsilon(const Matrix& data) {
  const Index n = data.rows();
  if (n < 2) throw DataError("epsilon rule needs at least two rows");
  if (data.hasNaN()) throw DataError("epsilon rule needs initialized (NaN-free) data");
  const Index m = std::min<Index>(n, 1000);
  Matrix sub(m, data.cols());
  for (Index k = 0; k < m; ++k) sub.row(k) = data.row(k * n / m);
  const Matrix g = pairwise_sq_cost(sub, sub);
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Index i = 0; i < m; ++i)
    for (Index j = i + 1; j < m; ++j) d.push_back(g(i, j));
  const std::size_t half = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(half), d.end());
  double median = d[half];
  if (d.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(half)));
  }
  return std::max(0.05 * median, 1e-6);
}

Matrix ot_grad_supports(const Matrix& plan, const Matrix& za, const Matrix& zb) {
  if (plan.rows() != za.rows() || plan.cols() != zb.rows() || za.cols() != zb.cols()) {
    throw DataError("ot_grad_supports: shape mismatch");
  }
  const Vector mass = plan.rowwise().sum();
  return 2.0 * (mass.asDiagonal() * za - plan * zb);
}

double w22_exact(const Matrix& a, const Matrix& c) {
  if (a.cols() != c.cols()) throw DataError("w22_exact: feature dimensions differ");
  const Index na = a.rows(), nc = c.rows();
  if (na == 0 || nc == 0) throw DataError("w22_exact: empty support");
  const Index l = std::lcm(na, nc);
  if (l > 4096) throw UsageError("w22_exact: lcm of support sizes too large");
  Matrix ra(l, a.cols()), rc(l, c.cols());
  for (Index k = 0; k < l; ++k) {
    ra.row(k) = a.row(k / (l / na));
    rc.row(k) = c.row(k / (l / nc));
  }
  return exact_ot_uniform(pairwise_sq_cost(ra, rc)).distance;
}

}  // namespace tdm
