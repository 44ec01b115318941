#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "tdm/data.hpp"
#include "tdm/error.hpp"
#include "test_helpers.hpp"

using namespace tdm;
using tdm::test::TempDir;

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Dataset column(std::initializer_list<double> v) {
  Matrix m(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return Dataset(m);
}
}  // namespace

TEST_CASE("parse_csv reads NaN cells and headers") {
  const Dataset d = parse_csv("1.0,NaN\n2.0,3.0", false);
  CHECK(d.n_rows() == 2);
  CHECK(d.n_cols() == 2);
  CHECK(std::isnan(d.values(0, 1)));
  CHECK(d.values(1, 1) == 3.0);
  CHECK(d.col_names.empty());

  const Dataset h = parse_csv("a,b\n1,2\n", true);
  CHECK(h.n_rows() == 1);
  CHECK(h.col_names == std::vector<std::string>{"a", "b"});

  const Dataset sentinels = parse_csv("NA,nan,,4\r\n1,2,3,4\r\n", false);
  CHECK(derive_mask(sentinels).missing_count() == 3);
}

TEST_CASE("parse_csv rejects malformed input") {
  CHECK_THROWS_AS(parse_csv("1,2\n3", false), DataError);
  CHECK_THROWS_AS(parse_csv("1,x\n", false), DataError);
  CHECK_THROWS_AS(parse_csv("", false), DataError);
  CHECK_THROWS_AS(parse_csv("a,b\n", true), DataError);
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", false), DataError);
}

TEST_CASE("derive_mask") {
  const MissingMask m = derive_mask(parse_csv("1.0,NaN\n2.0,3.0", false));
  CHECK(m.missing_count() == 1);
  CHECK(m.missing(0, 1));

  CHECK(derive_mask(Dataset(Matrix::Ones(3, 2))).missing_count() == 0);
  CHECK_THROWS_AS(derive_mask(parse_csv("NaN,1\nNaN,2", false)), DataError);
}

TEST_CASE("standardize uses population statistics over observed cells") {
  // mean 2, population sd sqrt(2/3)
  const auto [s, p] = standardize(column({1, 2, 3}));
  CHECK(p.means(0) == doctest::Approx(2.0));
  CHECK(p.stds(0) == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-14));
  CHECK(s.values(0, 0) == doctest::Approx(-1.224744871391589).epsilon(1e-12));
  CHECK(s.values(1, 0) == doctest::Approx(0.0));
  CHECK(s.values(2, 0) == doctest::Approx(1.224744871391589).epsilon(1e-12));

  const auto [c, pc] = standardize(column({5, 5, 5}));
  CHECK(pc.stds(0) == 1.0);
  CHECK(c.values.cwiseAbs().maxCoeff() == 0.0);

  const auto [n, pn] = standardize(column({1, kNaN, 3}));
  CHECK(pn.means(0) == 2.0);
  CHECK(pn.stds(0) == 1.0);
  CHECK(n.values(0, 0) == -1.0);
  CHECK(std::isnan(n.values(1, 0)));
  CHECK(n.values(2, 0) == 1.0);
}

TEST_CASE("standardize invariants on random data") {
  Matrix x = tdm::test::gaussian(200, 4, 11) * 3.0;
  x.array() += 7.0;
  for (Index i = 0; i < 200; i += 7) x(i, i % 4) = kNaN;
  const Dataset data(x);
  const auto [s, p] = standardize(data);
  for (Index j = 0; j < 4; ++j) {
    double sum = 0, ss = 0;
    Index k = 0;
    for (Index i = 0; i < 200; ++i) {
      if (std::isnan(s.values(i, j))) continue;
      sum += s.values(i, j);
      ss += s.values(i, j) * s.values(i, j);
      ++k;
    }
    CHECK(std::abs(sum / k) < 1e-10);
    CHECK(std::abs(std::sqrt(ss / k) - 1.0) < 1e-10);
  }
  const Dataset back = destandardize(s, p);
  for (Index i = 0; i < x.size(); ++i) {
    const double a = x.data()[i], b = back.values.data()[i];
    if (std::isnan(a)) {
      CHECK(std::isnan(b));
    } else {
      CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
    }
  }
}

TEST_CASE("destandardize") {
  const StandardizationParams p{Vector::Constant(1, 2.0), Vector::Constant(1, 0.5)};
  CHECK(destandardize(Dataset(Matrix::Zero(1, 1)), p).values(0, 0) == 2.0);
  CHECK_THROWS_AS(destandardize(Dataset(Matrix::Zero(1, 2)), p), DataError);
}

TEST_CASE("noisy_mean_init") {
  Rng rng(3);
  const Dataset full(tdm::test::gaussian(5, 3, 1));
  CHECK(noisy_mean_init(full, derive_mask(full), rng).values == full.values);

  Matrix x = tdm::test::gaussian(50, 3, 2);
  x(4, 1) = kNaN;
  x(9, 2) = kNaN;
  const auto [s, p] = standardize(Dataset(x));
  const MissingMask mask = derive_mask(s);

  Rng a(42), b(42);
  const Dataset ia = noisy_mean_init(s, mask, a);
  const Dataset ib = noisy_mean_init(s, mask, b);
  CHECK(ia.values == ib.values);
  CHECK(!ia.has_missing());
  CHECK(derive_mask(ia).missing_count() == 0);
  for (Index i = 0; i < 50; ++i)
    for (Index j = 0; j < 3; ++j)
      if (!mask.missing(i, j)) CHECK(ia.values(i, j) == s.values(i, j));

  // Standardized columns have nan-mean 0, so the imputation is pure noise with
  // sd 0.1; |noise| > 0.5 is a 5-sigma event.
  int outside = 0;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    Rng r(seed);
    const Dataset imp = noisy_mean_init(s, mask, r);
    if (std::abs(imp.values(4, 1)) > 0.5) ++outside;
  }
  CHECK(outside == 0);
}

TEST_CASE("write_csv round trips through load_csv") {
  TempDir dir;
  Matrix x = tdm::test::gaussian(6, 3, 5);
  x(2, 1) = kNaN;
  x(0, 0) = 1e-300;
  x(1, 2) = -123456.789e10;
  const Dataset d(x, {"a", "b", "c"});
  write_csv(d, dir / "x.csv");
  const Dataset back = load_csv(dir / "x.csv", true);
  CHECK(tdm::test::nan_equal(back.values, x));
  CHECK(back.col_names == d.col_names);

  std::ifstream in(dir / "x.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "a,b,c");

  CHECK_THROWS_AS(write_csv(d, "/nonexistent_dir/x.csv"), DataError);

  write_csv(Dataset(x), dir / "unnamed.csv");
  const Dataset unnamed = load_csv(dir / "unnamed.csv", true);
  CHECK(unnamed.col_names == std::vector<std::string>{"x1", "x2", "x3"});
  CHECK(unnamed.values.rows() == 6);
}

TEST_CASE("header detection") {
  CHECK(starts_with_header("a,b\n1,2\n"));
  CHECK(starts_with_header("x1,NaN\n1,2\n"));
  CHECK_FALSE(starts_with_header("1,2\n3,4\n"));
  CHECK_FALSE(starts_with_header("NaN,-1e-3\n3,4\n"));
  CHECK_FALSE(starts_with_header("inf,2\n3,4\n"));
  CHECK_FALSE(starts_with_header(""));

  TempDir dir;
  std::ofstream(dir / "bare.csv") << "1,2\n3,NaN\n";
  const Dataset bare = load_csv(dir / "bare.csv");
  CHECK(bare.values.rows() == 2);
  CHECK(bare.col_names.empty());
  std::ofstream(dir / "named.csv") << "p,q\n1,2\n";
  const Dataset named = load_csv(dir / "named.csv");
  CHECK(named.values.rows() == 1);
  CHECK(named.col_names == std::vector<std::string>{"p", "q"});
}

TEST_CASE("mask csv round trip") {
  TempDir dir;
  FlagMatrix f(2, 3);
  f << 1, 0, 0, 0, 1, 1;
  write_mask_csv(MissingMask(f), dir / "m.csv");
  CHECK(load_mask_csv(dir / "m.csv").flags == f);
}
