#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tdm/ot.hpp"
#include "test_helpers.hpp"

using namespace tdm;
using tdm::test::gaussian;

namespace {

Matrix col(std::initializer_list<double> v) {
  Matrix m(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

Matrix naive_cost(const Matrix& a, const Matrix& c) {
  Matrix g(a.rows(), c.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < c.rows(); ++j) {
      double s = 0;
      for (Index k = 0; k < a.cols(); ++k) s += (a(i, k) - c(j, k)) * (a(i, k) - c(j, k));
      g(i, j) = s;
    }
  }
  return g;
}

double exact_w2(const Matrix& a, const Matrix& c) { return exact_ot_uniform(pairwise_sq_cost(a, c)).distance; }

double median_offdiag(const Matrix& g) {
  std::vector<double> v(g.data(), g.data() + g.size());
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Vector uniform(Index b) { return Vector::Constant(b, 1.0 / static_cast<double>(b)); }

}  // namespace

TEST_CASE("pairwise_sq_cost") {
  const Matrix a = col({0, 1});
  Matrix expected(2, 2);
  expected << 0, 1, 1, 0;
  CHECK(pairwise_sq_cost(a, a) == expected);

  Matrix p(1, 2), q(1, 2);
  p << 0, 0;
  q << 3, 4;
  CHECK(pairwise_sq_cost(p, q)(0, 0) == doctest::Approx(25.0));

  const Matrix x = gaussian(5, 3, 1), y = gaussian(5, 3, 2);
  CHECK((pairwise_sq_cost(x, y) - naive_cost(x, y)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((pairwise_sq_cost(x, x).array() >= 0.0).all());
  CHECK_THROWS_AS(pairwise_sq_cost(x, gaussian(5, 2, 3)), DataError);
}

TEST_CASE("exact_ot_uniform small instances") {
  const Matrix x = gaussian(5, 2, 3);
  const OtResult self = exact_ot_uniform(pairwise_sq_cost(x, x));
  CHECK(self.distance == 0.0);
  REQUIRE(self.assignment);
  for (Index i = 0; i < 5; ++i) CHECK((*self.assignment)[static_cast<std::size_t>(i)] == i);

  // {0, 2} vs {1, 3}: matching 0->1, 2->3 costs (1 + 1) / 2.
  CHECK(exact_w2(col({0, 2}), col({1, 3})) == doctest::Approx(1.0));

  Matrix a(2, 2), c(2, 2);
  a << 0, 0, 1, 1;
  c << 1, 0, 0, 1;
  CHECK(exact_w2(a, c) == doctest::Approx(1.0));

  CHECK_THROWS_AS(exact_ot_uniform(Matrix::Zero(2, 3)), DataError);
}

TEST_CASE("exact solver agrees with enumeration") {
  std::mt19937_64 gen(123);
  for (int t = 0; t < 100; ++t) {
    const Matrix cost = pairwise_sq_cost(gaussian(6, 3, gen()), gaussian(6, 3, gen()));
    const OtResult e = exact_ot_uniform(cost);
    const OtResult b = brute_force_ot(cost);
    CHECK(std::abs(e.distance - b.distance) < 1e-12);
    // Plan is a scaled permutation matrix realizing the distance.
    CHECK(std::abs((e.plan.array() * cost.array()).sum() - e.distance) < 1e-12);
    CHECK((e.plan.rowwise().sum().array() - 1.0 / 6).abs().maxCoeff() < 1e-15);
    CHECK((e.plan.colwise().sum().array() - 1.0 / 6).abs().maxCoeff() < 1e-15);
  }
  Matrix one(1, 1);
  one << 3.5;
  CHECK(brute_force_ot(one).distance == 3.5);
  CHECK_THROWS(brute_force_ot(Matrix::Zero(9, 9)));

  // Relabeling rows does not change the optimum.
  const Matrix cost = pairwise_sq_cost(gaussian(5, 2, 7), gaussian(5, 2, 8));
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  CHECK(brute_force_ot(perm * cost).distance == doctest::Approx(brute_force_ot(cost).distance));
}

TEST_CASE("exact solver on larger instances is optimal against random swaps") {
  const Matrix cost = pairwise_sq_cost(gaussian(60, 3, 1), gaussian(60, 3, 2));
  const OtResult r = exact_ot_uniform(cost);
  IndexList perm = *r.assignment;
  // No 2-swap improves the optimum.
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t j = i + 1; j < perm.size(); ++j) {
      const double before = cost(Index(i), perm[i]) + cost(Index(j), perm[j]);
      const double after = cost(Index(i), perm[j]) + cost(Index(j), perm[i]);
      CHECK(after >= before - 1e-12);
    }
  }
}

TEST_CASE("W2 metric properties") {
  std::mt19937_64 gen(9);
  for (int t = 0; t < 30; ++t) {
    const Index b = 2 + static_cast<Index>(gen() % 6);
    const Matrix a = gaussian(b, 3, gen()), c = gaussian(b, 3, gen()), e = gaussian(b, 3, gen());
    const double ac = exact_w2(a, c), ca = exact_w2(c, a);
    CHECK(std::abs(ac - ca) < 1e-12);
    CHECK(ac > 1e-9);
    // Same multiset in another order.
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(b);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + b, gen);
    CHECK(exact_w2(a, perm * a) < 1e-9);
    // Triangle inequality on W2 = sqrt(W2^2).
    CHECK(std::sqrt(ac) <= std::sqrt(exact_w2(a, e)) + std::sqrt(exact_w2(e, c)) + 1e-9);
  }
}

TEST_CASE("sinkhorn") {
  const Matrix cost = pairwise_sq_cost(col({0, 2}), col({1, 3}));
  SinkhornConfig cfg;
  cfg.epsilon = 0.01;
  const OtResult r = sinkhorn(cost, uniform(2), uniform(2), cfg);
  CHECK((r.plan.rowwise().sum().array() - 0.5).abs().maxCoeff() < 1e-6);
  CHECK((r.plan.colwise().sum().array() - 0.5).abs().maxCoeff() < 1e-6);
  CHECK(std::abs(r.distance - 1.0) < 0.05);
  CHECK(r.distance == doctest::Approx((r.plan.array() * cost.array()).sum()));

  CHECK_THROWS_AS(sinkhorn(cost, Vector::Constant(2, 0.4), uniform(2), cfg), DataError);
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(sinkhorn(cost, uniform(2), uniform(2), cfg), UsageError);
}

TEST_CASE("sinkhorn cost is an upper bound and tightens as epsilon shrinks") {
  std::mt19937_64 gen(31);
  for (int t = 0; t < 20; ++t) {
    const Matrix cost = pairwise_sq_cost(gaussian(8, 2, gen()), gaussian(8, 2, gen()));
    const double exact = exact_ot_uniform(cost).distance;
    double previous = std::numeric_limits<double>::infinity();
    for (double eps : {1.0, 0.1, 0.01}) {
      SinkhornConfig cfg;
      cfg.epsilon = eps;
      cfg.max_iters = 20000;
      const double v = sinkhorn(cost, uniform(8), uniform(8), cfg).distance;
      CHECK(v >= exact - 1e-12);
      CHECK(v <= previous + 1e-9);
      previous = v;
    }
    SinkhornConfig tight;
    tight.epsilon = 0.001 * median_offdiag(cost);
    tight.max_iters = 20000;
    const double v = sinkhorn(cost, uniform(8), uniform(8), tight).distance;
    CHECK(v <= exact * 1.01);
  }
}

TEST_CASE("default_epsilon") {
  Matrix two(2, 2);
  two << 0, 0, 0, 2;
  CHECK(default_epsilon(two) == doctest::Approx(0.2));
  CHECK(default_epsilon(Matrix::Ones(5, 3)) == 1e-6);
  CHECK_THROWS_AS(default_epsilon(Matrix::Ones(1, 3)), DataError);

  // Below 1000 rows every pair is used.
  const Matrix x = gaussian(500, 2, 4);
  const Matrix g = pairwise_sq_cost(x, x);
  std::vector<double> d;
  for (Index i = 0; i < 500; ++i)
    for (Index j = i + 1; j < 500; ++j) d.push_back(g(i, j));
  std::sort(d.begin(), d.end());
  const double median = 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
  CHECK(default_epsilon(x) == doctest::Approx(0.05 * median).epsilon(1e-14));
}

TEST_CASE("ot_grad_supports") {
  const Matrix z = gaussian(4, 3, 5);
  const OtResult self = exact_ot_uniform(pairwise_sq_cost(z, z));
  CHECK(ot_grad_supports(self.plan, z, z).cwiseAbs().maxCoeff() == 0.0);

  Matrix one = Matrix::Ones(1, 1), zero = Matrix::Zero(1, 1);
  CHECK(ot_grad_supports(one, one, zero)(0, 0) == 2.0);

  CHECK_THROWS_AS(ot_grad_supports(Matrix::Zero(2, 2), z, z), DataError);

  // Finite differences of the exact distance (plan unique for continuous data).
  std::mt19937_64 gen(77);
  for (int t = 0; t < 10; ++t) {
    const Matrix a = gaussian(5, 3, gen()), c = gaussian(5, 3, gen());
    const OtResult r = exact_ot_uniform(pairwise_sq_cost(a, c));
    const Matrix grad = ot_grad_supports(r.plan, a, c);
    const double h = 1e-6;
    for (Index i = 0; i < a.rows(); ++i) {
      for (Index k = 0; k < a.cols(); ++k) {
        Matrix ap = a, am = a;
        ap(i, k) += h;
        am(i, k) -= h;
        const double fd = (exact_w2(ap, c) - exact_w2(am, c)) / (2 * h);
        CHECK(std::abs(fd - grad(i, k)) <= 1e-5 * std::max(std::abs(grad(i, k)), 1e-3));
      }
    }
  }
}

TEST_CASE("w22_exact handles unequal support sizes") {
  const Matrix a = gaussian(4, 2, 1);
  Matrix doubled(8, 2);
  doubled << a, a;
  CHECK(w22_exact(a, doubled) < 1e-12);
  const Matrix c = gaussian(6, 2, 2);
  CHECK(w22_exact(a, c) == doctest::Approx(w22_exact(c, a)));
  Matrix point = Matrix::Zero(1, 2);
  // Distance to a Dirac is the mean squared norm.
  CHECK(w22_exact(a, point) == doctest::Approx(a.rowwise().squaredNorm().mean()));
}

TEST_CASE("non-finite costs are rejected") {
  Matrix c = Matrix::Ones(3, 3);
  c(1, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(exact_ot_uniform(c), NumericalError);
  CHECK_THROWS_AS(solve_assignment(c), NumericalError);
  c(1, 2) = std::nan("");
  CHECK_THROWS_AS(exact_ot_uniform(c), NumericalError);
  CHECK_THROWS_AS(sinkhorn(c, uniform(3), uniform(3), SinkhornConfig{}), NumericalError);
}
